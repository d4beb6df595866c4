use std::collections::BTreeSet;

use proptest::prelude::*;
use spatialprompt_core::backend::enforce_fit;
use spatialprompt_core::backend::mock::mock_generate;
use spatialprompt_core::compiler::build_junction_graph;
use spatialprompt_core::compiler::junction::connected_components;
use spatialprompt_core::corpus::{self, random_cloud, random_history, random_mesh, random_sketch, CloudKind, SketchShape};
use spatialprompt_core::distance::{point_triangle_distance, TriangleBvh};
use spatialprompt_core::geometry::similarity_transform;
use spatialprompt_core::obb::{BOX_PADDING, MIN_HALF_EXTENT};
use spatialprompt_core::polyline::{polyline_length, resample};
use spatialprompt_core::{
    compile, export_mesh_obj, fit_oriented_box, load_mesh_obj, validate, CompileParams, OrientedBox, Parallelism, Point3,
    Quaternion, SketchDocument, ValidatorParams,
};

fn point() -> impl Strategy<Value = Point3> {
    (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Quaternion> {
    (point(), -3.1..3.1f64).prop_filter_map("axis", |(a, t)| a.normalized().map(|a| Quaternion::from_axis_angle(a, t)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_parse_identity(seed in any::<u64>(), n_ops in 1usize..60) {
        let ops = random_history(&mut corpus::rng(seed), n_ops, &SketchShape::default());
        let doc = SketchDocument::replay("doc", &ops).unwrap();
        let bytes = doc.to_canonical_bytes().unwrap();
        let back = SketchDocument::parse(&bytes).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(back.to_canonical_bytes().unwrap(), bytes);
        prop_assert_eq!(back.digest().unwrap(), doc.digest().unwrap());
    }

    #[test]
    fn replay_reproduces_document(seed in any::<u64>(), n_ops in 1usize..60) {
        let ops = random_history(&mut corpus::rng(seed), n_ops, &SketchShape::default());
        let doc = SketchDocument::replay("doc", &ops).unwrap();
        prop_assert_eq!(doc.revision as usize, ops.len());
        prop_assert_eq!(doc.replayed().unwrap().digest().unwrap(), doc.digest().unwrap());
    }

    #[test]
    fn compile_is_deterministic(seed in any::<u64>()) {
        let doc = random_sketch(&mut corpus::rng(seed), &SketchShape::default());
        let a = compile(&doc, &CompileParams::default()).unwrap().to_canonical_bytes().unwrap();
        let b = compile(&doc.clone(), &CompileParams::default()).unwrap().to_canonical_bytes().unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_stroke_in_exactly_one_component(seed in any::<u64>()) {
        let doc = random_sketch(&mut corpus::rng(seed), &SketchShape::default());
        let cs = compile(&doc, &CompileParams::default()).unwrap();
        let mut seen = BTreeSet::new();
        for c in &cs.components {
            for s in &c.stroke_ids {
                prop_assert!(seen.insert(s.clone()), "{} twice", s);
            }
        }
        prop_assert_eq!(seen, doc.strokes.keys().cloned().collect::<BTreeSet<_>>());
        for p in &cs.proportions {
            prop_assert!(p.scale_ratio > 0.0 && p.scale_ratio <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn resample_keeps_endpoints_and_count(pts in prop::collection::vec(point(), 2..12), spacing in 0.01..3.0f64) {
        let len = polyline_length(&pts);
        prop_assume!(len > 1e-6);
        let out = resample(&pts, spacing).unwrap();
        let expected = ((len / spacing).floor() as usize + 1).max(2);
        prop_assert_eq!(out.len(), expected);
        prop_assert_eq!(out[0], pts[0]);
        prop_assert_eq!(*out.last().unwrap(), *pts.last().unwrap());
    }

    #[test]
    fn fitted_box_contains_points_and_beats_world_box(seed in any::<u64>(), n in 3usize..500) {
        let pts = random_cloud(&mut corpus::rng(seed), n, CloudKind::General);
        let b = fit_oriented_box(&pts).unwrap();
        prop_assert!(b.check_invariants().is_ok());
        for p in &pts {
            prop_assert!(b.contains_with_slack(*p, 1e-9));
        }
        let (lo, hi) = world_bounds(&pts);
        let world: f64 = (0..3)
            .map(|i| ((hi.component(i) - lo.component(i)) / 2.0 * BOX_PADDING).max(MIN_HALF_EXTENT) * 2.0)
            .product();
        prop_assert!(b.volume() <= world + 1e-9, "{} > {}", b.volume(), world);
    }

    #[test]
    fn degenerate_clouds_hit_the_floor(seed in any::<u64>(), n in 3usize..200, collinear in any::<bool>()) {
        let kind = if collinear { CloudKind::Collinear } else { CloudKind::Coplanar };
        let pts = random_cloud(&mut corpus::rng(seed), n, kind);
        let b = fit_oriented_box(&pts).unwrap();
        let floored = b.half_extents.iter().filter(|h| **h == MIN_HALF_EXTENT).count();
        prop_assert_eq!(floored, if collinear { 2 } else { 1 });
        for p in &pts {
            prop_assert!(b.contains_with_slack(*p, 1e-9));
        }
    }

    #[test]
    fn junctions_match_transitive_closure(seed in any::<u64>(), eps in 0.001..0.2f64) {
        let shape = SketchShape { max_strokes: 50, max_points: 4, ..SketchShape::default() };
        let doc = random_sketch(&mut corpus::rng(seed), &shape);
        let graph = build_junction_graph(&doc, eps, 0.05).unwrap();
        let got: BTreeSet<Vec<String>> = connected_components(&graph).into_iter().collect();
        prop_assert_eq!(got, closure_components(&doc, eps));
    }

    #[test]
    fn enforce_fit_lands_inside_and_is_idempotent(seed in any::<u64>(), q in rotation(), c in point(), h in (0.01..3.0f64, 0.01..3.0f64, 0.01..3.0f64)) {
        let mesh = random_mesh(&mut corpus::rng(seed), 20, 10, 2.0);
        let target = OrientedBox {
            center: c,
            axes: [q.rotate(Point3::X), q.rotate(Point3::Y), q.rotate(Point3::Z)],
            half_extents: [h.0, h.1, h.2],
        };
        let once = enforce_fit(&mesh, &target).unwrap();
        for v in &once.mesh.vertices {
            prop_assert!(target.contains_with_slack(*v, 1e-9));
        }
        let twice = enforce_fit(&once.mesh, &target).unwrap();
        prop_assert!((twice.report.scale - 1.0).abs() <= 1e-9);
        for (a, b) in once.mesh.vertices.iter().zip(&twice.mesh.vertices) {
            prop_assert!(a.distance(*b) <= 1e-9);
        }
    }

    #[test]
    fn triangle_distance_is_rigid_invariant(p in point(), a in point(), b in point(), c in point(), q in rotation(), t in point()) {
        let d = point_triangle_distance(p, [a, b, c]);
        let m = |x: Point3| similarity_transform(x, 1.0, &q, t);
        let e = point_triangle_distance(m(p), [m(a), m(b), m(c)]);
        prop_assert!((d - e).abs() <= 1e-9 * (1.0 + d));
        prop_assert!((point_triangle_distance(p, [b, c, a]) - d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn triangle_distance_bounded_by_samples(p in point(), a in point(), b in point(), c in point()) {
        let d = point_triangle_distance(p, [a, b, c]);
        let n = 40;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n - i {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                let x = a + (b - a) * u + (c - a) * v;
                best = best.min(p.distance(x));
            }
        }
        let longest = a.distance(b).max(b.distance(c)).max(c.distance(a));
        prop_assert!(d <= best + 1e-12);
        prop_assert!(best - d <= longest / n as f64 + 1e-12);
    }

    #[test]
    fn bvh_matches_brute_force(seed in any::<u64>(), queries in prop::collection::vec(point(), 1..20)) {
        let mesh = random_mesh(&mut corpus::rng(seed), 30, 40, 3.0);
        let tris = mesh.triangle_points();
        let bvh = TriangleBvh::new(tris.clone());
        for q in queries {
            let brute = tris.iter().map(|t| point_triangle_distance(q, *t)).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(bvh.nearest_distance(q).unwrap(), brute);
        }
    }

    #[test]
    fn obj_round_trip(seed in any::<u64>(), nv in 1usize..60, nt in 0usize..80) {
        let mesh = random_mesh(&mut corpus::rng(seed), nv, nt, 10.0);
        let back = load_mesh_obj(&export_mesh_obj(&mesh)).unwrap();
        prop_assert_eq!(back, mesh);
    }
}

fn world_bounds(pts: &[Point3]) -> (Point3, Point3) {
    let lo = pts.iter().fold(Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), |a, p| a.min_by_component(*p));
    let hi = pts.iter().fold(Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| a.max_by_component(*p));
    (lo, hi)
}

/// Strokes related when any endpoints are within `eps`, closed with
/// Warshall's algorithm.
fn closure_components(doc: &SketchDocument, eps: f64) -> BTreeSet<Vec<String>> {
    let strokes: Vec<_> = doc.strokes.values().collect();
    let ends: Vec<[Point3; 2]> = strokes
        .iter()
        .map(|s| [s.points[0] * doc.calibration_scale, *s.points.last().unwrap() * doc.calibration_scale])
        .collect();
    let n = ends.len() * 2;
    let end = |k: usize| ends[k / 2][k % 2];
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = i / 2 == j / 2 || end(i).distance(end(j)) <= eps;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    (0..strokes.len())
        .map(|i| {
            let mut group: Vec<String> =
                (0..strokes.len()).filter(|&j| reach[2 * i][2 * j]).map(|j| strokes[j].stroke_id.clone()).collect();
            group.sort();
            group
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sequential_and_parallel_reports_match(seed in any::<u64>(), shift in 0.0..0.5f64) {
        let doc = random_sketch(&mut corpus::rng(seed), &SketchShape::default());
        let cs = compile(&doc, &CompileParams::default()).unwrap();
        let mesh = mock_generate(&cs).unwrap().map_vertices(|v| v + Point3::new(shift, 0.0, 0.0));
        let run = |parallelism| {
            let params = ValidatorParams { parallelism, ..ValidatorParams::default() };
            validate(&mesh, &cs, &params).unwrap().to_canonical_bytes().unwrap()
        };
        prop_assert_eq!(run(Parallelism::Sequential), run(Parallelism::Parallel));
    }
}
