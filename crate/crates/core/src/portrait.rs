//! SVG phase portraits: orbit clouds, periodic orbits coloured by class, `Fix(R)` branches
//! and bump supports. Output bytes depend only on the inputs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::harness::HarnessError;
use crate::involution::InvolutionSpec;
use crate::maps::MapSpec;
use crate::orbits::{fix_branches, symmetric_search, PeriodicOrbitRecord};
use crate::torus::Point;

type P = Point<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortraitConfig {
    /// Canvas side in pixels.
    pub size: u32,
    /// Orbit clouds start on a `seeds × seeds` grid.
    pub seeds: usize,
    /// Points per cloud.
    pub iterates: usize,
    /// Largest period of the marked symmetric orbits.
    pub n_max: usize,
    pub density: usize,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        PortraitConfig { size: 600, seeds: 12, iterates: 400, n_max: 6, density: 256 }
    }
}

fn class_color(label: &str) -> &'static str {
    match label {
        "elliptic" => "#1b9e77",
        "hyperbolic" => "#d95f02",
        "parabolic" => "#7570b3",
        _ => "#666666",
    }
}

struct Canvas {
    size: f64,
    out: String,
}

impl Canvas {
    fn px(&self, p: P) -> (f64, f64) {
        (p.x * self.size, (1.0 - p.y) * self.size)
    }
}

/// Renders the portrait of `map` with marked orbits from a symmetric search under `r`
/// (when given) plus any `extra` records.
pub fn portrait_svg(
    map: &MapSpec<f64>,
    r: Option<&InvolutionSpec<f64>>,
    extra: &[PeriodicOrbitRecord],
    cfg: &PortraitConfig,
) -> Result<String, HarnessError> {
    let size = cfg.size.max(16) as f64;
    let mut c = Canvas { size, out: String::new() };
    let _ = writeln!(
        c.out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = cfg.size.max(16)
    );
    let _ = writeln!(c.out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    let _ = writeln!(c.out, r##"<g class="clouds" fill="#9e9e9e">"##);
    let k = cfg.seeds.max(1);
    for j in 0..k {
        for i in 0..k {
            let seed = Point::new((i as f64 + 0.5) / k as f64, (j as f64 + 0.5) / k as f64);
            for z in map.orbit(seed, cfg.iterates)? {
                let (x, y) = c.px(z);
                let _ = writeln!(c.out, r#"<rect x="{x:.2}" y="{y:.2}" width="1" height="1"/>"#);
            }
        }
    }
    let _ = writeln!(c.out, "</g>");

    if let Some(r) = r {
        let _ = writeln!(c.out, r##"<g class="fix" stroke="#377eb8" stroke-width="1.5" fill="none">"##);
        for branch in fix_branches(r, 256).map_err(crate::maps::MapError::from)? {
            let mut path = String::new();
            let mut prev: Option<P> = None;
            for &p in &branch {
                let jump = prev.is_none_or(|q| (q.x - p.x).abs() > 0.5 || (q.y - p.y).abs() > 0.5);
                let (x, y) = c.px(p);
                let _ = write!(path, "{}{x:.2},{y:.2} ", if jump { "M" } else { "L" });
                prev = Some(p);
            }
            let _ = writeln!(c.out, r#"<path d="{}"/>"#, path.trim_end());
        }
        let _ = writeln!(c.out, "</g>");
    }

    let mut records: Vec<PeriodicOrbitRecord> = extra.to_vec();
    if let Some(r) = r {
        if cfg.n_max > 0 {
            records.extend(symmetric_search(map, r, cfg.n_max, cfg.density)?.orbits);
        }
    }
    let _ = writeln!(c.out, r#"<g class="orbits">"#);
    for rec in &records {
        let label = rec.classification.label();
        for z in map.orbit(rec.representative, rec.period.saturating_sub(1))? {
            let (x, y) = c.px(z);
            let _ = writeln!(
                c.out,
                r#"<circle class="{label}" cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/>"#,
                class_color(label)
            );
        }
    }
    let _ = writeln!(c.out, "</g>");

    let layers = map.layers();
    if !layers.is_empty() {
        let _ = writeln!(c.out, r##"<g class="supports" stroke="#e41a1c" fill="none">"##);
        for l in layers {
            let (x, y) = c.px(l.bump.center);
            let rad = l.bump.outer_radius * size;
            let _ = writeln!(c.out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{rad:.2}"/>"#);
        }
        let _ = writeln!(c.out, "</g>");
    }
    c.out.push_str("</svg>\n");
    Ok(c.out)
}
