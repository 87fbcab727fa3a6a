#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DVector;
use pwacert_core::geometry::HPolytope;
use pwacert_core::pwa_nn::{ActivationPattern, Network};
use pwacert_core::segmentation::LinearRegion;
use rand::Rng;

/// Plain scalar-loop forward pass with its own activation lookup.
pub fn scalar_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    for layer in net.layers() {
        let act = &layer.activation;
        let mut next = Vec::with_capacity(layer.n_out());
        for i in 0..layer.n_out() {
            let mut pre = layer.bias[i];
            for (k, zk) in z.iter().enumerate() {
                pre += layer.weights[(i, k)] * zk;
            }
            let mut j = 0;
            while j < act.breakpoints().len() && pre > act.breakpoints()[j] {
                j += 1;
            }
            next.push(act.slopes()[j] * pre + act.intercepts()[j]);
        }
        z = next;
    }
    z
}

/// Uniform random point of the simplex spanned by `vertices`.
pub fn convex_point(rng: &mut impl Rng, vertices: &[DVector<f64>]) -> DVector<f64> {
    let w: Vec<f64> = vertices.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    let mut p = DVector::zeros(vertices[0].len());
    for (v, wk) in vertices.iter().zip(&w) {
        p += v * (wk / total);
    }
    p
}

/// Points strictly inside `poly`, by rejection from its bounding box.
pub fn interior_samples(rng: &mut impl Rng, poly: &HPolytope, count: usize, margin: f64) -> Vec<DVector<f64>> {
    let verts = poly.vertices(1e-7).unwrap();
    let n = poly.dim();
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    for v in verts.iter() {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < count * 10_000 {
        tries += 1;
        let x = DVector::from_fn(n, |k, _| rng.random_range(lo[k]..=hi[k]));
        if poly.contains_interior(&x, margin) {
            out.push(x);
        }
    }
    if out.len() < count {
        // Thin cells: fall back to convex combinations of the vertices.
        while out.len() < count {
            out.push(convex_point(rng, &verts.vertices));
        }
    }
    out
}

/// Area of a 2-D polytope from its vertices (shoelace on the angular order).
pub fn area_2d(poly: &HPolytope) -> f64 {
    let verts = poly.vertices(1e-7).unwrap().vertices;
    if verts.len() < 3 {
        return 0.0;
    }
    let cx = verts.iter().map(|v| v[0]).sum::<f64>() / verts.len() as f64;
    let cy = verts.iter().map(|v| v[1]).sum::<f64>() / verts.len() as f64;
    let mut pts: Vec<(f64, f64)> = verts.iter().map(|v| (v[0], v[1])).collect();
    pts.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.partial_cmp(&tb).unwrap()
    });
    let mut s = 0.0;
    for i in 0..pts.len() {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % pts.len()];
        s += x0 * y1 - x1 * y0;
    }
    s.abs() / 2.0
}

pub fn by_pattern(regions: &[LinearRegion]) -> BTreeMap<ActivationPattern, Vec<&LinearRegion>> {
    let mut map: BTreeMap<ActivationPattern, Vec<&LinearRegion>> = BTreeMap::new();
    for r in regions {
        map.entry(r.pattern.clone()).or_default().push(r);
    }
    map
}

/// Same pattern set, and per pattern the polytopes agree as point sets.
pub fn same_regions(a: &[LinearRegion], b: &[LinearRegion], tol: f64) -> Result<(), String> {
    let ma = by_pattern(a);
    let mb = by_pattern(b);
    if ma.len() != a.len() || mb.len() != b.len() {
        return Err("duplicate patterns".into());
    }
    let ka: Vec<_> = ma.keys().collect();
    let kb: Vec<_> = mb.keys().collect();
    if ka != kb {
        return Err(format!("pattern sets differ: {} vs {}", ka.len(), kb.len()));
    }
    for (pattern, ra) in &ma {
        let pa = &ra[0].polytope;
        let pb = &mb[pattern][0].polytope;
        if !pa.contains_polytope(pb, tol).unwrap() || !pb.contains_polytope(pa, tol).unwrap() {
            return Err(format!("polytopes differ for {pattern:?}"));
        }
    }
    Ok(())
}

/// Rows `±e_k x ≤ h` of a box written out by hand, as (normal, offset).
pub fn box_faces(lo: &[f64], hi: &[f64]) -> Vec<(DVector<f64>, f64)> {
    let n = lo.len();
    let mut out = vec![];
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        out.push((e.clone(), hi[k]));
        out.push((-e, -lo[k]));
    }
    out
}
