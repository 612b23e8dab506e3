use alloc::format;
use alloc::string::String;
use core::fmt::Write as _;

use super::{Tree, TreeNode};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn feature_label(tree: &Tree, names: &[String], feature: usize) -> String {
    names
        .get(feature)
        .or_else(|| tree.feature_names.get(feature))
        .cloned()
        .unwrap_or_else(|| format!("x[{feature}]"))
}

/// Graphviz digraph of `tree`. Node ids are pre-order positions, labels
/// round to 4 decimals, and each node's `tooltip` carries the exact
/// threshold or leaf value so a path can be followed without rounding.
/// `names` overrides the tree's own feature names when non-empty.
pub fn export_dot(tree: &Tree, names: &[String]) -> String {
    let mut out = String::from("digraph Tree {\nnode [shape=box, fontname=\"helvetica\"] ;\nedge [fontname=\"helvetica\"] ;\n");
    let mut next_id = 0usize;
    let mut stack = alloc::vec![(&tree.root, None::<(usize, bool)>)];
    while let Some((node, parent)) = stack.pop() {
        let id = next_id;
        next_id += 1;
        match node {
            TreeNode::Leaf {
                value,
                n_samples,
                impurity,
            } => {
                let label = format!("value = {value:.4}\nsamples = {n_samples}\nimpurity = {impurity:.4}");
                let _ = writeln!(
                    out,
                    "{id} [label={}, tooltip={}] ;",
                    quote(&label),
                    quote(&format!("value = {value:?}"))
                );
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                n_samples,
                impurity,
            } => {
                let name = feature_label(tree, names, *feature);
                let label = format!("{name} ≤ {threshold:.4}\nsamples = {n_samples}\nimpurity = {impurity:.4}");
                let _ = writeln!(
                    out,
                    "{id} [label={}, tooltip={}] ;",
                    quote(&label),
                    quote(&format!("feature = {feature}; {name} <= {threshold:?}"))
                );
                stack.push((right, Some((id, false))));
                stack.push((left, Some((id, true))));
            }
        }
        if let Some((from, is_left)) = parent {
            let _ = writeln!(out, "{from} -> {id} [label=\"{is_left}\"] ;");
        }
    }
    out.push_str("}\n");
    out
}
