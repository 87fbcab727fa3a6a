//! SVG rendering of a planar segmentation.
//!
//! Regions are filled with a colour keyed by a hash of their activation
//! pattern, the safe set is outlined, obstacles are red and every distinct
//! violated vertex gets one marker. Output depends only on the inputs.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use nalgebra::DVector;
use pwacert_core::geometry::{GeometryError, HPolytope};
use pwacert_core::pwa_nn::ActivationPattern;
use pwacert_core::{LinearRegion, Verdict};

const WIDTH: f64 = 640.0;
const PAD: f64 = 16.0;
const VERTEX_TOL: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("only planar problems can be plotted, this one has {0} states")]
    NotPlottable(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Hue in degrees for a pattern.
pub fn pattern_hue(pattern: &ActivationPattern) -> u64 {
    let mut h = DefaultHasher::new();
    pattern.hash(&mut h);
    h.finish() % 360
}

/// Vertices of a planar polytope in counter-clockwise order.
pub fn polygon(poly: &HPolytope) -> Result<Vec<(f64, f64)>, GeometryError> {
    let verts = poly.vertices(VERTEX_TOL)?.vertices;
    let n = verts.len() as f64;
    let cx = verts.iter().map(|v| v[0]).sum::<f64>() / n;
    let cy = verts.iter().map(|v| v[1]).sum::<f64>() / n;
    let mut pts: Vec<(f64, f64)> = verts.iter().map(|v| (v[0], v[1])).collect();
    pts.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.total_cmp(&tb)
    });
    Ok(pts)
}

struct Frame {
    lo: (f64, f64),
    scale: f64,
    height: f64,
}

impl Frame {
    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            PAD + (x - self.lo.0) * self.scale,
            self.height - PAD - (y - self.lo.1) * self.scale,
        )
    }

    fn points(&self, pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn render_svg(
    safe: &HPolytope,
    obstacles: &[HPolytope],
    regions: &[LinearRegion],
    verdict: Option<&Verdict>,
) -> Result<String, PlotError> {
    if safe.dim() != 2 {
        return Err(PlotError::NotPlottable(safe.dim()));
    }
    let (lo, hi) = safe.bounding_box()?;
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = (WIDTH - 2.0 * PAD) / span;
    let frame = Frame {
        lo: (lo[0], lo[1]),
        scale,
        height: (hi[1] - lo[1]) * scale + 2.0 * PAD,
    };
    let width = (hi[0] - lo[0]) * scale + 2.0 * PAD;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{:.0}" viewBox="0 0 {width:.3} {:.3}">"#,
        frame.height, frame.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r##"<g stroke="#555" stroke-width="0.5">"##);
    for r in regions {
        let pts = polygon(&r.polytope)?;
        let _ = writeln!(
            svg,
            r#"<polygon class="region" data-id="{}" fill="hsl({}, 55%, 72%)" points="{}"/>"#,
            r.id,
            pattern_hue(&r.pattern),
            frame.points(&pts)
        );
    }
    let _ = writeln!(svg, "</g>");
    for (k, o) in obstacles.iter().enumerate() {
        let pts = polygon(o)?;
        let _ = writeln!(
            svg,
            r#"<polygon class="obstacle" data-index="{k}" fill="red" fill-opacity="0.6" stroke="darkred" points="{}"/>"#,
            frame.points(&pts)
        );
    }
    let pts = polygon(safe)?;
    let _ = writeln!(
        svg,
        r#"<polygon class="safe-set" fill="none" stroke="black" stroke-width="2" points="{}"/>"#,
        frame.points(&pts)
    );
    if let Some(v) = verdict {
        for p in distinct_vertices(v.violations.iter().map(|c| &c.vertex)) {
            let (x, y) = frame.map((p[0], p[1]));
            let _ = writeln!(
                svg,
                r#"<circle class="violation" data-x="{:.9}" data-y="{:.9}" cx="{x:.3}" cy="{y:.3}" r="4" fill="none" stroke="black" stroke-width="1.5"/>"#,
                p[0], p[1]
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// First occurrence of each vertex, up to `VERTEX_TOL`.
pub fn distinct_vertices<'a>(vertices: impl Iterator<Item = &'a DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = vec![];
    for v in vertices {
        if !out.iter().any(|u| (u - v).amax() <= VERTEX_TOL) {
            out.push(v.clone());
        }
    }
    out
}
