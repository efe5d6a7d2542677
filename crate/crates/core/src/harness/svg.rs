//! Static SVG renderings of worlds, search trees, and solutions.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{Cell, Instance};
use crate::jointstate::JointPath;
use crate::tree::Tree;

const CELL: u32 = 20;

const PALETTE: [&str; 10] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628", "#f781bf", "#17becf",
    "#bcbd22", "#636363",
];

fn color(agent: usize) -> &'static str {
    PALETTE[agent % PALETTE.len()]
}

fn center(c: Cell) -> (u32, u32) {
    (
        u32::from(c.x) * CELL + CELL / 2,
        u32::from(c.y) * CELL + CELL / 2,
    )
}

fn polyline_points(cells: impl Iterator<Item = Cell>) -> String {
    let mut out = String::new();
    for c in cells {
        let (x, y) = center(c);
        if !out.is_empty() {
            out.push(' ');
        }
        let _ = write!(out, "{x},{y}");
    }
    out
}

/// Every tree edge as its joint step sequence, in node id order, for the
/// tree layer of [`render_svg`].
pub fn tree_edges(tree: &Tree) -> Vec<JointPath> {
    tree.iter()
        .filter(|(_, node)| node.parent().is_some())
        .map(|(_, node)| node.edge_path().clone())
        .collect()
}

/// Parse the edge layer back out of a tree dump in JSON-lines form.
pub fn tree_edges_from_dump(text: &str) -> Result<Vec<JointPath>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)?;
        match value.get("type").and_then(|t| t.as_str()) {
            Some("node") => {}
            Some("edge") => {
                let steps = value
                    .get("steps")
                    .ok_or_else(|| Error::Format("edge line without steps".into()))?;
                let path: JointPath = serde_json::from_value(steps.clone())?;
                if !path.is_empty() {
                    out.push(path);
                }
            }
            _ => return Err(Error::Format("tree dump line without a type tag".into())),
        }
    }
    Ok(out)
}

/// One self-contained SVG: obstacles, optional tree layer, optional solution
/// polylines (class "path", one per agent), and start/goal markers.
pub fn render_svg(instance: &Instance, tree: &[JointPath], solution: Option<&JointPath>) -> String {
    let size = u32::from(instance.world.size());
    let side = size * CELL;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {side} {side}\" width=\"{side}\" height=\"{side}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{side}\" height=\"{side}\" fill=\"#ffffff\"/>");
    for &c in instance.world.obstacles() {
        let x = u32::from(c.x) * CELL;
        let y = u32::from(c.y) * CELL;
        let _ = writeln!(
            svg,
            "<rect class=\"obstacle\" x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#37474f\"/>"
        );
    }
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{side}\" height=\"{side}\" fill=\"none\" stroke=\"#90a4ae\" stroke-width=\"1\"/>"
    );
    for edge in tree {
        for agent in 0..instance.n_agents() {
            let points = polyline_points(edge.steps.iter().map(|s| s.cells()[agent]));
            let _ = writeln!(
                svg,
                "<polyline class=\"tree\" points=\"{points}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1\" opacity=\"0.25\"/>",
                color(agent)
            );
        }
    }
    if let Some(path) = solution {
        for agent in 0..instance.n_agents() {
            let points = polyline_points(path.steps.iter().map(|s| s.cells()[agent]));
            let _ = writeln!(
                svg,
                "<polyline class=\"path\" points=\"{points}\" fill=\"none\" stroke=\"{}\" stroke-width=\"3\" stroke-linejoin=\"round\" opacity=\"0.9\"/>",
                color(agent)
            );
        }
    }
    for (agent, &c) in instance.starts.iter().enumerate() {
        let (x, y) = center(c);
        let _ = writeln!(
            svg,
            "<circle class=\"start\" cx=\"{x}\" cy=\"{y}\" r=\"5\" fill=\"{}\"/>",
            color(agent)
        );
    }
    for (agent, &c) in instance.goals.iter().enumerate() {
        let x = u32::from(c.x) * CELL + 4;
        let y = u32::from(c.y) * CELL + 4;
        let w = CELL - 8;
        let _ = writeln!(
            svg,
            "<rect class=\"goal\" x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            color(agent)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
