mod common;

use common::{fixture_path, linear_feedback, quadrants, wagons};
use pwacert::commands::plot_outcome;
use pwacert::plot::{render_svg, PlotError};
use pwacert::{load_problem, run_verify, VerifyFlags};
use pwacert_core::segmentation::{verify_partition, PartitionOptions};
use pwacert_core::{segment, SegmentOptions, DEFAULT_TOL};

fn attr<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = line.find(&key)? + key.len();
    let len = line[start..].find('"')?;
    Some(&line[start..start + len])
}

fn elements<'a>(svg: &'a str, class: &str) -> Vec<&'a str> {
    svg.lines().filter(|l| attr(l, "class") == Some(class)).collect()
}

fn points(line: &str) -> Vec<(f64, f64)> {
    attr(line, "points")
        .unwrap()
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

fn shoelace(pts: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for i in 0..pts.len() {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % pts.len()];
        s += x0 * y1 - x1 * y0;
    }
    s.abs() / 2.0
}

#[test]
fn affine_controller_is_one_polygon() {
    let p = linear_feedback();
    let seg = segment(&p.network, &p.safe, &[], &SegmentOptions::default()).unwrap();
    let svg = render_svg(&p.safe, &[], &seg.regions, None).unwrap();
    let regions = elements(&svg, "region");
    assert_eq!(regions.len(), 1);
    let mut a = points(regions[0]);
    let mut b = points(elements(&svg, "safe-set")[0]);
    a.sort_by(|u, v| u.partial_cmp(v).unwrap());
    b.sort_by(|u, v| u.partial_cmp(v).unwrap());
    assert_eq!(a, b);
    assert!(elements(&svg, "violation").is_empty());
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
}

#[test]
fn quadrants_tile_the_safe_set() {
    let p = quadrants();
    let seg = segment(&p.network, &p.safe, &[], &SegmentOptions::default()).unwrap();
    let report = verify_partition(&seg.regions, &p.safe, &PartitionOptions::default()).unwrap();
    assert!(report.is_partition(&DEFAULT_TOL));
    let svg = render_svg(&p.safe, &[], &seg.regions, None).unwrap();
    let regions = elements(&svg, "region");
    assert_eq!(regions.len(), seg.regions.len());
    assert_eq!(regions.len(), 4);
    let total: f64 = regions.iter().map(|r| shoelace(&points(r))).sum();
    let outline = shoelace(&points(elements(&svg, "safe-set")[0]));
    assert!((total - outline).abs() <= 1e-6 * outline);
}

#[test]
fn markers_sit_on_the_violated_vertices() {
    let p = load_problem(fixture_path("expanding.json")).unwrap();
    let outcome = run_verify(&p, &VerifyFlags::default(), None).unwrap();
    let svg = plot_outcome(&p, &outcome).unwrap();
    assert_eq!(elements(&svg, "obstacle").len(), 2);

    let mut marked: Vec<(f64, f64)> = elements(&svg, "violation")
        .iter()
        .map(|l| (attr(l, "data-x").unwrap().parse().unwrap(), attr(l, "data-y").unwrap().parse().unwrap()))
        .collect();
    let mut expected: Vec<(f64, f64)> = vec![];
    for v in &outcome.report.violations {
        let q = (v.vertex[0], v.vertex[1]);
        if !expected.iter().any(|e| (e.0 - q.0).abs() < 1e-7 && (e.1 - q.1).abs() < 1e-7) {
            expected.push(q);
        }
    }
    assert!(!expected.is_empty());
    marked.sort_by(|u, v| u.partial_cmp(v).unwrap());
    expected.sort_by(|u, v| u.partial_cmp(v).unwrap());
    assert_eq!(marked.len(), expected.len());
    for (m, e) in marked.iter().zip(&expected) {
        assert!((m.0 - e.0).abs() < 1e-8 && (m.1 - e.1).abs() < 1e-8, "{m:?} vs {e:?}");
    }
}

#[test]
fn only_planar_problems_plot() {
    let p = wagons();
    assert!(matches!(render_svg(&p.safe, &[], &[], None), Err(PlotError::NotPlottable(4))));
}
