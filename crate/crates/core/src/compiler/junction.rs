//! Scaffold graph: stroke endpoints merged into junctions.

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::union_find::DisjointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldEdge {
    pub stroke_id: String,
    pub a: usize,
    pub b: usize,
    /// Calibrated, resampled polyline.
    pub polyline: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JunctionGraph {
    pub nodes: Vec<Point3>,
    /// One edge per stroke, ascending stroke id.
    pub edges: Vec<ScaffoldEdge>,
}

/// A stroke after calibration and resampling.
#[derive(Debug, Clone)]
pub struct PreparedStroke {
    pub stroke_id: String,
    pub role: crate::sketch::Role,
    /// Calibrated raw points.
    pub points: Vec<Point3>,
    /// Calibrated resampled points; endpoints equal `points`' endpoints.
    pub samples: Vec<Point3>,
}

/// Merge endpoints within `epsilon` by transitive clustering.
///
/// Node indices follow first appearance, walking strokes in the given order
/// and visiting each stroke's start before its end.
pub fn merge_endpoints(strokes: &[PreparedStroke], epsilon: f64) -> JunctionGraph {
    let endpoints: Vec<Point3> = strokes
        .iter()
        .flat_map(|s| [s.points[0], s.points[s.points.len() - 1]])
        .collect();
    let mut ds = DisjointSet::new(endpoints.len());
    let eps2 = epsilon * epsilon;
    for i in 0..endpoints.len() {
        for j in i + 1..endpoints.len() {
            if endpoints[i].distance_squared_to(endpoints[j]) <= eps2 {
                ds.union(i, j);
            }
        }
    }
    let labels = ds.labels();
    let node_count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![Point3::ZERO; node_count];
    let mut counts = vec![0usize; node_count];
    for (p, &l) in endpoints.iter().zip(&labels) {
        sums[l] += *p;
        counts[l] += 1;
    }
    let nodes = sums.iter().zip(&counts).map(|(s, &c)| *s / c as f64).collect();
    let edges = strokes
        .iter()
        .enumerate()
        .map(|(i, s)| ScaffoldEdge {
            stroke_id: s.stroke_id.clone(),
            a: labels[2 * i],
            b: labels[2 * i + 1],
            polyline: s.samples.clone(),
        })
        .collect();
    JunctionGraph { nodes, edges }
}

/// Strokes grouped by graph connectivity.
///
/// Groups are ordered by their smallest stroke id; ids inside a group are
/// ascending. Assumes `graph.edges` is sorted by stroke id.
pub fn connected_components(graph: &JunctionGraph) -> Vec<Vec<String>> {
    let mut ds = DisjointSet::new(graph.nodes.len());
    for e in &graph.edges {
        ds.union(e.a, e.b);
    }
    let mut root_group: Vec<Option<usize>> = vec![None; graph.nodes.len()];
    let mut groups: Vec<Vec<String>> = Vec::new();
    for e in &graph.edges {
        let r = ds.find(e.a);
        let g = *root_group[r].get_or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(e.stroke_id.clone());
    }
    groups
}
