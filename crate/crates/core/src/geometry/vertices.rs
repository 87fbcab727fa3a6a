//! Vertex enumeration for bounded H-polytopes.
//!
//! The production path is the double-description method on the homogenized
//! cone `{(x, t) | a_i·x - b_i t ≤ 0, t ≥ 0}`: extreme rays with `t > 0` are
//! the vertices, rays with `t = 0` (or a leftover lineality space) mean the
//! polytope is unbounded. Lower-dimensional sets such as faces are handled
//! because equality pairs simply consume lineality directions.
//!
//! [`vertices_active_set`] is the brute-force reference: solve every square
//! subsystem of `n` rows and keep the feasible solutions.

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, HPolytope, VPolytope};

// Zero test for a normalized constraint evaluated on an ∞-normalized ray.
const ZERO_EPS: f64 = 1e-10;
// Rays whose homogenizing coordinate is below this are recession directions.
const T_EPS: f64 = 1e-11;

struct Ray {
    z: Vec<f64>,
    zeros: Vec<u64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn normalize(z: &mut [f64]) -> bool {
    let m = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m < 1e-300 {
        return false;
    }
    z.iter_mut().for_each(|v| *v /= m);
    true
}

fn bit_set(bits: &mut [u64], k: usize) {
    bits[k / 64] |= 1 << (k % 64);
}

fn is_subset(inner: &[u64], outer: &[u64]) -> bool {
    inner.iter().zip(outer).all(|(i, o)| i & !o == 0)
}

fn zero_set(z: &[f64], constraints: &[Vec<f64>], processed: &[usize], words: usize) -> Vec<u64> {
    let mut bits = vec![0u64; words];
    for &k in processed {
        if dot(&constraints[k], z).abs() <= ZERO_EPS {
            bit_set(&mut bits, k);
        }
    }
    bits
}

pub(crate) fn enumerate_vertices(p: &HPolytope, tol: f64) -> Result<VPolytope, GeometryError> {
    let n = p.dim();
    let d = n + 1;
    // Homogenized, unit-norm constraints; index 0 is t ≥ 0.
    let mut constraints: Vec<Vec<f64>> = Vec::with_capacity(p.n_rows() + 1);
    let mut t_row = vec![0.0; d];
    t_row[n] = -1.0;
    constraints.push(t_row);
    for i in 0..p.n_rows() {
        let row = p.a().row(i);
        let norm = row.norm();
        if norm < 1e-300 {
            if p.b()[i] < -tol {
                return Ok(VPolytope::default());
            }
            continue;
        }
        let mut h: Vec<f64> = row.iter().map(|v| v / norm).collect();
        h.push(-p.b()[i] / norm);
        constraints.push(h);
    }
    let words = constraints.len().div_ceil(64);

    let mut lineality: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            e
        })
        .collect();
    let mut rays: Vec<Ray> = Vec::new();
    let mut processed: Vec<usize> = Vec::with_capacity(constraints.len());

    for k in 0..constraints.len() {
        let h = constraints[k].clone();
        // Lineality direction with the largest component along h.
        let pick = lineality
            .iter()
            .enumerate()
            .map(|(idx, l)| (idx, dot(&h, l)))
            .filter(|(_, v)| v.abs() > ZERO_EPS)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        if let Some((idx, hl)) = pick {
            let mut pivot = lineality.swap_remove(idx);
            if hl > 0.0 {
                pivot.iter_mut().for_each(|v| *v = -*v);
            }
            let hp = -hl.abs();
            for l in lineality.iter_mut() {
                let f = dot(&h, l) / hp;
                l.iter_mut().zip(&pivot).for_each(|(v, q)| *v -= f * q);
            }
            for r in rays.iter_mut() {
                let f = dot(&h, &r.z) / hp;
                r.z.iter_mut().zip(&pivot).for_each(|(v, q)| *v -= f * q);
                normalize(&mut r.z);
                bit_set(&mut r.zeros, k);
            }
            processed.push(k);
            normalize(&mut pivot);
            let zeros = zero_set(&pivot, &constraints, &processed, words);
            rays.push(Ray { z: pivot, zeros });
            continue;
        }

        let values: Vec<f64> = rays.iter().map(|r| dot(&h, &r.z)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| values[i] > ZERO_EPS).collect();
        if pos.is_empty() {
            processed.push(k);
            for (r, v) in rays.iter_mut().zip(&values) {
                if v.abs() <= ZERO_EPS {
                    bit_set(&mut r.zeros, k);
                }
            }
            continue;
        }
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| values[i] < -ZERO_EPS).collect();

        let mut fresh: Vec<Ray> = Vec::new();
        for &ip in &pos {
            for &iq in &neg {
                let common: Vec<u64> = rays[ip]
                    .zeros
                    .iter()
                    .zip(&rays[iq].zeros)
                    .map(|(a, b)| a & b)
                    .collect();
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(ir, r)| ir == ip || ir == iq || !is_subset(&common, &r.zeros));
                if !adjacent {
                    continue;
                }
                let (sp, sq) = (values[ip], values[iq]);
                let mut z: Vec<f64> = rays[iq]
                    .z
                    .iter()
                    .zip(&rays[ip].z)
                    .map(|(q, pz)| sp * q - sq * pz)
                    .collect();
                if !normalize(&mut z) {
                    continue;
                }
                fresh.push(Ray { z, zeros: Vec::new() });
            }
        }
        processed.push(k);
        let mut next: Vec<Ray> = Vec::with_capacity(rays.len() + fresh.len());
        for (r, v) in rays.into_iter().zip(&values) {
            if *v <= ZERO_EPS {
                let mut r = r;
                if v.abs() <= ZERO_EPS {
                    bit_set(&mut r.zeros, k);
                }
                next.push(r);
            }
        }
        for mut r in fresh {
            r.zeros = zero_set(&r.z, &constraints, &processed, words);
            next.push(r);
        }
        rays = next;
    }

    let mut vertices: Vec<DVector<f64>> = Vec::new();
    let mut recession = !lineality.is_empty();
    for r in &rays {
        let t = r.z[n];
        if t > T_EPS {
            vertices.push(DVector::from_fn(n, |j, _| r.z[j] / t));
        } else {
            recession = true;
        }
    }
    if vertices.is_empty() {
        return Ok(VPolytope::default());
    }
    if recession {
        return Err(GeometryError::UnboundedPolytope);
    }
    Ok(VPolytope {
        vertices: dedup_sorted(vertices, tol),
    })
}

/// Brute-force vertex enumeration over all `n`-row subsets.
pub fn vertices_active_set(p: &HPolytope, tol: f64) -> VPolytope {
    let n = p.dim();
    let m = p.n_rows();
    let mut out = Vec::new();
    if m < n {
        return VPolytope::default();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| p.a()[(idx[r], c)]);
        let b = DVector::from_fn(n, |r, _| p.b()[idx[r]]);
        if let Some(x) = a.clone().lu().solve(&b) {
            // Reject near-singular systems through the residual.
            let residual = (&a * &x - &b).amax();
            if x.iter().all(|v| v.is_finite()) && residual < 1e-9 && p.contains(&x, tol) {
                out.push(x);
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return VPolytope {
                    vertices: dedup_sorted(out, tol),
                };
            }
            i -= 1;
            if idx[i] != i + m - n {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn dedup_sorted(mut vs: Vec<DVector<f64>>, tol: f64) -> Vec<DVector<f64>> {
    vs.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        if !out.iter().any(|w| (w - &v).amax() <= tol) {
            out.push(v);
        }
    }
    out
}
