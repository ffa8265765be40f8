use std::path::{Path, PathBuf};

use anyhow::Context;
use deepgd::graph::{parse_edge_list, parse_graphml};
use deepgd::Graph;

fn is_graphml(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("graphml" | "xml"))
}

/// GraphML for `.graphml`/`.xml`, edge list otherwise.
pub fn read_graph(path: &Path) -> anyhow::Result<Graph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
    let g = if is_graphml(path) { parse_graphml(&text) } else { parse_edge_list(&text) };
    g.with_context(|| format!("parsing graph {}", path.display()))
}

pub fn graph_text(g: &Graph, path: &Path) -> String {
    if is_graphml(path) {
        g.to_graphml()
    } else {
        g.to_edge_list()
    }
}

pub fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Relative paths land inside `out_dir` when one is set.
pub fn resolve(out_dir: Option<&Path>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "graph".into())
}
