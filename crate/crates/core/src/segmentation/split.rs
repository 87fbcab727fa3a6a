//! Cutting one region by the breakpoint hyperplanes of the next layer.

use nalgebra::DVector;

use super::{LinearRegion, SegmentationError};
use crate::geometry::{GeometryError, HPolytope, RowReduction, Side, Tolerances};
use crate::pwa_nn::{ActivationPattern, Layer, Network};

/// Normals with sup-norm below this do not cut.
pub const DEGENERATE_NORMAL: f64 = 1e-12;

/// `normal · x = offset` is where neuron `neuron` of the next layer crosses
/// breakpoint `breakpoint`; the preactivation exceeds the breakpoint on the
/// side `normal · x > offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionHyperplane {
    pub normal: DVector<f64>,
    pub offset: f64,
    pub neuron: usize,
    pub breakpoint: usize,
    /// Normal vanishes on the region: the preactivation is constant there.
    pub degenerate: bool,
    /// Preactivation at the origin of input space, `W_n G + b_n`.
    pub constant: f64,
}

/// Candidate hyperplanes of `layer` over a region refined through the
/// previous layer, ordered by neuron then breakpoint.
pub fn region_hyperplanes(layer: &Layer, region: &LinearRegion) -> Vec<RegionHyperplane> {
    let prev = region.params.last();
    let normals = &layer.weights * &prev.matrix;
    let constants = &layer.weights * &prev.offset + &layer.bias;
    let mut out = Vec::with_capacity(layer.n_hyperplanes());
    for neuron in 0..layer.n_out() {
        let normal = normals.row(neuron).transpose();
        let degenerate = normal.amax() < DEGENERATE_NORMAL;
        for (breakpoint, &m) in layer.activation.breakpoints().iter().enumerate() {
            out.push(RegionHyperplane {
                normal: normal.clone(),
                offset: m - constants[neuron],
                neuron,
                breakpoint,
                degenerate,
                constant: constants[neuron],
            });
        }
    }
    out
}

/// Cell under construction: polytope, a ball certified to lie inside it,
/// and the segments chosen so far for the current layer.
#[derive(Clone)]
struct Cell {
    poly: HPolytope,
    center: DVector<f64>,
    radius: f64,
    segs: Vec<usize>,
}

/// Nondegenerate Chebyshev ball of `poly`, if any.
fn inscribed_ball(poly: &HPolytope, tol: &Tolerances) -> Result<Option<(DVector<f64>, f64)>, GeometryError> {
    match poly.chebyshev_center(tol.lp) {
        Ok((c, r)) if r >= tol.radius => Ok(Some((c, r))),
        Ok(_) | Err(GeometryError::EmptyPolytope) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Splits `cell` by `h` into its `≤` and `≥` parts. A side with no
/// nondegenerate cell is dropped and the other side keeps the parent
/// polytope unchanged.
fn bisect(cell: Cell, h: &RegionHyperplane, tol: &Tolerances) -> Result<(Option<Cell>, Option<Cell>), GeometryError> {
    let norm = h.normal.norm();
    let delta = (h.normal.dot(&cell.center) - h.offset) / norm;
    let below = || cell.poly.intersect_halfspace(&h.normal, h.offset, Side::Below);
    let above = || cell.poly.intersect_halfspace(&h.normal, h.offset, Side::Above);
    let keep = delta.abs().min(cell.radius);

    if keep >= tol.radius {
        // The center side certainly holds a ball of radius `keep`.
        let (near, far) = if delta > 0.0 { (above(), below()) } else { (below(), above()) };
        let Some((fc, fr)) = inscribed_ball(&far, tol)? else {
            return Ok(if delta > 0.0 { (None, Some(cell)) } else { (Some(cell), None) });
        };
        let near = Cell {
            poly: near,
            center: cell.center.clone(),
            radius: keep,
            segs: cell.segs.clone(),
        };
        let far = Cell {
            poly: far,
            center: fc,
            radius: fr,
            segs: cell.segs,
        };
        return Ok(if delta > 0.0 { (Some(far), Some(near)) } else { (Some(near), Some(far)) });
    }

    let (lo, hi) = (below(), above());
    match (inscribed_ball(&lo, tol)?, inscribed_ball(&hi, tol)?) {
        (Some((lc, lr)), Some((hc, hr))) => Ok((
            Some(Cell {
                poly: lo,
                center: lc,
                radius: lr,
                segs: cell.segs.clone(),
            }),
            Some(Cell {
                poly: hi,
                center: hc,
                radius: hr,
                segs: cell.segs,
            }),
        )),
        // A ball inside one side also lies inside the parent.
        (Some((c, r)), None) => Ok((Some(Cell { center: c, radius: r, ..cell }), None)),
        (None, Some((c, r))) => Ok((None, Some(Cell { center: c, radius: r, ..cell }))),
        (None, None) => Ok(if delta > 0.0 { (None, Some(cell)) } else { (Some(cell), None) }),
    }
}

/// Walks the breakpoints of one neuron: a cell above breakpoint `k` is
/// tested against `k + 1`; a cell below `k` is in segment `k` because the
/// offsets of one neuron increase with `k`.
fn cut_neuron(cell: Cell, hs: &[RegionHyperplane], tol: &Tolerances, out: &mut Vec<Cell>) -> Result<(), GeometryError> {
    let mut current = cell;
    for (k, h) in hs.iter().enumerate() {
        let (lo, hi) = bisect(current, h, tol)?;
        if let Some(mut lo) = lo {
            lo.segs.push(k);
            out.push(lo);
        }
        match hi {
            Some(hi) => current = hi,
            None => return Ok(()),
        }
    }
    current.segs.push(hs.len());
    out.push(current);
    Ok(())
}

/// Arrangement of `hyperplanes` inside `region`, by recursive halfspace
/// splitting in neuron/breakpoint order. Empty and degenerate cells are
/// discarded; each child gets a minimal representation, its Chebyshev ball,
/// the extended pattern and parameters through the next layer.
pub fn split_region(
    net: &Network,
    region: &LinearRegion,
    hyperplanes: &[RegionHyperplane],
    tol: &Tolerances,
) -> Result<Vec<LinearRegion>, SegmentationError> {
    Ok(split_region_traced(net, region, hyperplanes, tol)?
        .into_iter()
        .map(|c| c.region)
        .collect())
}

/// Child region with the cell it was reduced from.
pub(super) struct TracedChild {
    pub region: LinearRegion,
    /// Rows before redundancy removal.
    pub raw: HPolytope,
    /// Dropped rows of `raw` with the maximum of their left-hand side.
    pub dropped: Vec<(usize, f64)>,
    /// No hyperplane cut the parent: same polytope and ball.
    pub uncut: bool,
}

pub(super) fn split_region_traced(
    net: &Network,
    region: &LinearRegion,
    hyperplanes: &[RegionHyperplane],
    tol: &Tolerances,
) -> Result<Vec<TracedChild>, SegmentationError> {
    let layer = &net.layers()[region.depth];
    let per_neuron = layer.activation.breakpoints().len();
    debug_assert_eq!(hyperplanes.len(), layer.n_out() * per_neuron);

    let mut cells = vec![Cell {
        poly: region.polytope.clone(),
        center: region.center.clone(),
        radius: region.radius,
        segs: Vec::with_capacity(layer.n_out()),
    }];
    for neuron in 0..layer.n_out() {
        let hs = &hyperplanes[neuron * per_neuron..(neuron + 1) * per_neuron];
        if hs.is_empty() {
            cells.iter_mut().for_each(|c| c.segs.push(0));
            continue;
        }
        if hs[0].degenerate {
            let seg = layer.activation.segment(hs[0].constant);
            cells.iter_mut().for_each(|c| c.segs.push(seg));
            continue;
        }
        let mut next = Vec::with_capacity(cells.len() * 2);
        for cell in cells {
            cut_neuron(cell, hs, tol, &mut next)?;
        }
        cells = next;
    }

    let uncut = cells.len() == 1 && cells[0].poly.n_rows() == region.polytope.n_rows();
    let mut children = Vec::with_capacity(cells.len());
    for cell in cells {
        if uncut {
            let params = net.extend_params(&region.params, &cell.segs)?;
            let mut pattern = region.pattern.0.clone();
            pattern.push(cell.segs);
            children.push(TracedChild {
                region: LinearRegion {
                    id: 0,
                    parent: Some(region.id),
                    depth: region.depth + 1,
                    polytope: region.polytope.clone(),
                    pattern: ActivationPattern(pattern),
                    params,
                    center: region.center.clone(),
                    radius: region.radius,
                },
                raw: cell.poly,
                dropped: vec![],
                uncut,
            });
            continue;
        }
        let RowReduction { kept, dropped } = cell.poly.reduce(tol.lp)?;
        let poly = cell.poly.select_rows(&kept);
        let (center, radius) = match poly.chebyshev_center(tol.lp) {
            Ok(ball) => ball,
            // The certified ball is still valid if the final LP stumbles.
            Err(GeometryError::EmptyPolytope) => (cell.center, cell.radius),
            Err(e) => return Err(e.into()),
        };
        let params = net.extend_params(&region.params, &cell.segs)?;
        let mut pattern = region.pattern.0.clone();
        pattern.push(cell.segs);
        children.push(TracedChild {
            region: LinearRegion {
                id: 0,
                parent: Some(region.id),
                depth: region.depth + 1,
                polytope: poly,
                pattern: ActivationPattern(pattern),
                params,
                center,
                radius,
            },
            raw: cell.poly,
            dropped,
            uncut,
        });
    }
    Ok(children)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwa_nn::PwaActivation;
    use nalgebra::DMatrix;

    fn relu_net(w: &[f64], b: &[f64]) -> Network {
        let n = b.len();
        Network::new(vec![Layer::new(
            DMatrix::from_row_slice(n, 2, w),
            DVector::from_row_slice(b),
            PwaActivation::relu(),
        )])
        .unwrap()
    }

    fn root(net: &Network) -> LinearRegion {
        LinearRegion::root(net, HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]), &Tolerances::default()).unwrap()
    }

    #[test]
    fn first_layer_hyperplane_is_the_neuron() {
        let net = relu_net(&[2.0, -3.0], &[0.5]);
        let hs = region_hyperplanes(&net.layers()[0], &root(&net));
        assert_eq!(hs.len(), 1);
        assert_eq!(hs[0].normal.as_slice(), &[2.0, -3.0]);
        assert_eq!(hs[0].offset, -0.5);
        assert!(!hs[0].degenerate);
    }

    #[test]
    fn two_breakpoints_eight_neurons() {
        let layer = Layer::new(DMatrix::from_element(8, 2, 1.0), DVector::zeros(8), PwaActivation::hard_tanh());
        let net = Network::new(vec![layer]).unwrap();
        assert_eq!(region_hyperplanes(&net.layers()[0], &root(&net)).len(), 16);
    }

    #[test]
    fn crossing_line_gives_two_children() {
        let net = relu_net(&[1.0, 0.3], &[0.2]);
        let r = root(&net);
        let hs = region_hyperplanes(&net.layers()[0], &r);
        let kids = split_region(&net, &r, &hs, &Tolerances::default()).unwrap();
        assert_eq!(kids.len(), 2);
        assert_eq!(kids[0].pattern.0, vec![vec![0]]);
        assert_eq!(kids[1].pattern.0, vec![vec![1]]);
    }

    #[test]
    fn missing_line_keeps_parent() {
        let net = relu_net(&[1.0, 0.0], &[5.0]);
        let r = root(&net);
        let hs = region_hyperplanes(&net.layers()[0], &r);
        let kids = split_region(&net, &r, &hs, &Tolerances::default()).unwrap();
        assert_eq!(kids.len(), 1);
        assert_eq!(kids[0].pattern.0, vec![vec![1]]);
        assert_eq!(kids[0].polytope.n_rows(), 4);
    }

    #[test]
    fn degenerate_neuron_uses_constant() {
        let net = relu_net(&[0.0, 0.0, 1.0, 0.0], &[-1.0, 0.0]);
        let r = root(&net);
        let hs = region_hyperplanes(&net.layers()[0], &r);
        assert!(hs[0].degenerate && !hs[1].degenerate);
        let kids = split_region(&net, &r, &hs, &Tolerances::default()).unwrap();
        assert_eq!(kids.len(), 2);
        assert!(kids.iter().all(|k| k.pattern.0[0][0] == 0));
    }
}
