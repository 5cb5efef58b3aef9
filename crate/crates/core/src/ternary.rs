//! Ternary (Gibbs-triangle) diagrams as deterministic SVG.
//!
//! Scenes hold point layers by group, displacement paths and density
//! contours. Everything is laid out in unit coordinates with vertices
//! `A = (0,0)`, `B = (1,0)`, `C = (1/2, √3/2)` and scaled to the canvas at
//! render time with four-decimal output so identical scenes render to
//! identical bytes.

use crate::dirichlet::{log_density, DirichletParams};
use crate::error::{Error, Result};
use crate::simplex::{closure_with_epsilon, Composition, GroupLabel};
use std::fmt::Write as _;

const SQRT3_HALF: f64 = 0.866_025_403_784_438_6;

/// Fill colors for the two groups (red for group 0, blue for group 1).
const GROUP_COLORS: [&str; 2] = ["#d62728", "#1f77b4"];

/// Conventional fill color of a group (red for group 0, blue for group 1).
pub fn group_color(group: GroupLabel) -> &'static str {
    GROUP_COLORS[group.index()]
}

/// Barycentric embedding of a 3-part composition into the unit triangle.
pub fn barycentric_to_xy(x: &Composition) -> Result<(f64, f64)> {
    if x.dim() != 3 {
        return Err(Error::DimensionMismatch(3, x.dim()));
    }
    let p = x.parts();
    Ok((p[1] + 0.5 * p[2], SQRT3_HALF * p[2]))
}

/// One drawable layer of a scene.
#[derive(Debug, Clone)]
pub enum Layer {
    /// Sample points for one group; optional per-point radius scales
    /// (used to size matched points by their coupling weights).
    Points {
        group: GroupLabel,
        points: Vec<Composition>,
        radii: Option<Vec<f64>>,
    },
    /// Displacement paths, each a polyline of compositions.
    Paths { paths: Vec<Vec<Composition>> },
    /// Precomputed contour polylines in unit coordinates, with a stroke color.
    Contours {
        polylines: Vec<Vec<(f64, f64)>>,
        color: String,
    },
}

/// A ternary diagram: vertex labels, layers, square canvas size in pixels.
#[derive(Debug, Clone)]
pub struct TernaryScene {
    pub vertex_labels: [String; 3],
    pub canvas: f64,
    layers: Vec<Layer>,
}

impl TernaryScene {
    pub fn new(vertex_labels: [String; 3], canvas: f64) -> Self {
        Self {
            vertex_labels,
            canvas,
            layers: Vec::new(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Adds a layer after checking every composition is 3-dimensional.
    pub fn push_layer(&mut self, layer: Layer) -> Result<()> {
        match &layer {
            Layer::Points { points, radii, .. } => {
                for p in points {
                    barycentric_to_xy(p)?;
                }
                if let Some(r) = radii {
                    if r.len() != points.len() {
                        return Err(Error::DimensionMismatch(points.len(), r.len()));
                    }
                }
            }
            Layer::Paths { paths } => {
                for path in paths {
                    for p in path {
                        barycentric_to_xy(p)?;
                    }
                }
            }
            Layer::Contours { .. } => {}
        }
        self.layers.push(layer);
        Ok(())
    }
}

/// Marching-triangles contours of a Dirichlet log-density over the triangle.
///
/// `levels` are density values (not log); returns polylines in unit
/// coordinates, clipped to the triangle by construction of the grid.
pub fn density_contours(
    params: &DirichletParams,
    levels: &[f64],
    resolution: usize,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if params.dim() != 3 {
        return Err(Error::DimensionMismatch(3, params.dim()));
    }
    if levels
        .iter()
        .any(|&l| l.is_nan() || l <= 0.0 || !l.is_finite())
    {
        return Err(Error::InvalidParameter(
            "contour levels must be positive and finite".into(),
        ));
    }
    let n = resolution.max(8);

    // Node values on the triangular lattice i + j <= n; boundary nodes are
    // nudged inside with the closure floor so the log-density stays finite.
    let mut values = vec![f64::NAN; (n + 1) * (n + 1)];
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut coords = vec![(0.0_f64, 0.0_f64); (n + 1) * (n + 1)];
    for i in 0..=n {
        for j in 0..=(n - i) {
            let a = i as f64 / n as f64;
            let b = j as f64 / n as f64;
            let c = 1.0 - a - b;
            let comp = closure_with_epsilon(&[a, b, c.max(0.0)], 1e-9)?;
            values[idx(i, j)] = log_density(params, &comp)?;
            coords[idx(i, j)] = barycentric_to_xy(&comp)?;
        }
    }

    let mut polylines = Vec::new();
    for &level in levels {
        let target = level.ln();
        let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
        let mut emit = |tri: [(usize, usize); 3]| {
            let v: Vec<f64> = tri.iter().map(|&(i, j)| values[idx(i, j)]).collect();
            let p: Vec<(f64, f64)> = tri.iter().map(|&(i, j)| coords[idx(i, j)]).collect();
            let mut crossings = Vec::new();
            for e in 0..3 {
                let (a, b) = (e, (e + 1) % 3);
                let (va, vb) = (v[a] - target, v[b] - target);
                if (va < 0.0) != (vb < 0.0) {
                    let t = va / (va - vb);
                    crossings.push((
                        p[a].0 + t * (p[b].0 - p[a].0),
                        p[a].1 + t * (p[b].1 - p[a].1),
                    ));
                }
            }
            if crossings.len() == 2 {
                segments.push((crossings[0], crossings[1]));
            }
        };
        for i in 0..n {
            for j in 0..(n - i) {
                emit([(i, j), (i + 1, j), (i, j + 1)]);
                if i + j + 2 <= n {
                    emit([(i + 1, j), (i + 1, j + 1), (i, j + 1)]);
                }
            }
        }
        polylines.extend(chain_segments(segments));
    }
    Ok(polylines)
}

/// Greedily joins segments sharing endpoints into polylines.
fn chain_segments(segments: Vec<((f64, f64), (f64, f64))>) -> Vec<Vec<(f64, f64)>> {
    use std::collections::BTreeMap;
    let key =
        |p: (f64, f64)| -> (i64, i64) { ((p.0 * 1e7).round() as i64, (p.1 * 1e7).round() as i64) };
    let mut adjacency: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(key(a)).or_default().push(s);
        adjacency.entry(key(b)).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = vec![a, b];
        // Extend forward from the tail as long as exactly one segment continues.
        loop {
            let tail = *chain.last().unwrap();
            let Some(candidates) = adjacency.get(&key(tail)) else {
                break;
            };
            let next = candidates.iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (p, q) = segments[s];
            if key(p) == key(tail) {
                chain.push(q);
            } else {
                chain.push(p);
            }
        }
        chains.push(chain);
    }
    chains
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.4}")
}

/// Renders a scene to SVG 1.1 text; output is byte-stable for equal scenes.
pub fn render(scene: &TernaryScene) -> String {
    let size = scene.canvas;
    let margin = 0.10 * size;
    let scale = size - 2.0 * margin;
    let to_px =
        |(x, y): (f64, f64)| -> (f64, f64) { (margin + x * scale, size - margin - y * scale) };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        fmt_coord(size)
    );

    // Triangle frame.
    let a = to_px((0.0, 0.0));
    let b = to_px((1.0, 0.0));
    let c = to_px((0.5, SQRT3_HALF));
    let _ = writeln!(
        svg,
        r#"  <polygon points="{},{} {},{} {},{}" fill="none" stroke="black" stroke-width="1"/>"#,
        fmt_coord(a.0),
        fmt_coord(a.1),
        fmt_coord(b.0),
        fmt_coord(b.1),
        fmt_coord(c.0),
        fmt_coord(c.1)
    );

    // Vertex labels: A bottom-left, B bottom-right, C top.
    let offsets = [(-8.0, 16.0), (8.0, 16.0), (0.0, -8.0)];
    let anchors = ["end", "start", "middle"];
    for (k, (corner, label)) in [a, b, c].iter().zip(&scene.vertex_labels).enumerate() {
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" text-anchor="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            fmt_coord(corner.0 + offsets[k].0),
            fmt_coord(corner.1 + offsets[k].1),
            anchors[k],
            xml_escape(label)
        );
    }

    for layer in &scene.layers {
        match layer {
            Layer::Points {
                group,
                points,
                radii,
            } => {
                let color = GROUP_COLORS[group.index()];
                for (k, p) in points.iter().enumerate() {
                    let xy = to_px(barycentric_to_xy(p).expect("validated on push"));
                    let r = 3.0 * radii.as_ref().map_or(1.0, |rs| rs[k].max(0.0));
                    let _ = writeln!(
                        svg,
                        r#"  <circle cx="{}" cy="{}" r="{}" fill="{}" fill-opacity="0.75"/>"#,
                        fmt_coord(xy.0),
                        fmt_coord(xy.1),
                        fmt_coord(r),
                        color
                    );
                }
            }
            Layer::Paths { paths } => {
                for path in paths {
                    let pts: Vec<String> = path
                        .iter()
                        .map(|p| {
                            let xy = to_px(barycentric_to_xy(p).expect("validated on push"));
                            format!("{},{}", fmt_coord(xy.0), fmt_coord(xy.1))
                        })
                        .collect();
                    let _ = writeln!(
                        svg,
                        r##"  <polyline points="{}" fill="none" stroke="#555555" stroke-width="0.8"/>"##,
                        pts.join(" ")
                    );
                }
            }
            Layer::Contours { polylines, color } => {
                for line in polylines {
                    let pts: Vec<String> = line
                        .iter()
                        .map(|&xy| {
                            let p = to_px(xy);
                            format!("{},{}", fmt_coord(p.0), fmt_coord(p.1))
                        })
                        .collect();
                    let _ = writeln!(
                        svg,
                        r#"  <polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
                        pts.join(" "),
                        color
                    );
                }
            }
        }
    }

    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn barycentric_examples() {
        let u = Composition::uniform(3).unwrap();
        let (x, y) = barycentric_to_xy(&u).unwrap();
        assert_abs_diff_eq!(x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 3f64.sqrt() / 6.0, epsilon = 1e-12);

        let near_a = crate::simplex::closure(&[1.0, 0.0, 0.0]).unwrap();
        let (x, y) = barycentric_to_xy(&near_a).unwrap();
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-8);

        let mid_bc = crate::simplex::closure(&[0.0, 0.5, 0.5]).unwrap();
        let (x, y) = barycentric_to_xy(&mid_bc).unwrap();
        assert_abs_diff_eq!(x, 0.75, epsilon = 1e-8);
        assert_abs_diff_eq!(y, 3f64.sqrt() / 4.0, epsilon = 1e-8);

        let four = Composition::uniform(4).unwrap();
        assert!(matches!(
            barycentric_to_xy(&four),
            Err(Error::DimensionMismatch(3, 4))
        ));
    }

    #[test]
    fn embedding_is_affine() {
        // Midpoint of compositions maps to the midpoint of the plane points.
        let x = Composition::new(vec![0.6, 0.3, 0.1]).unwrap();
        let y = Composition::new(vec![0.1, 0.4, 0.5]).unwrap();
        let mid = Composition::new(
            x.parts()
                .iter()
                .zip(y.parts())
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
        .unwrap();
        let (mx, my) = barycentric_to_xy(&mid).unwrap();
        let (x0, y0) = barycentric_to_xy(&x).unwrap();
        let (x1, y1) = barycentric_to_xy(&y).unwrap();
        assert_abs_diff_eq!(mx, 0.5 * (x0 + x1), epsilon = 1e-9);
        assert_abs_diff_eq!(my, 0.5 * (y0 + y1), epsilon = 1e-9);
    }

    #[test]
    fn render_is_deterministic_and_counts_elements() {
        let mut scene = TernaryScene::new(["A".into(), "B".into(), "C".into()], 400.0);
        let empty = render(&scene);
        assert_eq!(empty, render(&scene));
        assert!(empty.contains("<polygon"));
        assert_eq!(empty.matches("<circle").count(), 0);

        scene
            .push_layer(Layer::Points {
                group: GroupLabel::Zero,
                points: vec![
                    Composition::new(vec![0.2, 0.3, 0.5]).unwrap(),
                    Composition::new(vec![0.5, 0.3, 0.2]).unwrap(),
                ],
                radii: None,
            })
            .unwrap();
        let two_points = render(&scene);
        assert_eq!(two_points.matches("<circle").count(), 2);

        scene
            .push_layer(Layer::Paths {
                paths: vec![vec![
                    Composition::new(vec![0.2, 0.3, 0.5]).unwrap(),
                    Composition::new(vec![0.3, 0.3, 0.4]).unwrap(),
                    Composition::new(vec![0.4, 0.3, 0.3]).unwrap(),
                ]],
            })
            .unwrap();
        let with_path = render(&scene);
        assert_eq!(with_path.matches("<polyline").count(), 1);
        // One polyline with exactly 3 coordinate pairs.
        let line = with_path.lines().find(|l| l.contains("<polyline")).unwrap();
        let pairs = line.split("points=\"").nth(1).unwrap();
        let pairs = pairs.split('"').next().unwrap();
        assert_eq!(pairs.split(' ').count(), 3);
    }

    #[test]
    fn rejects_non_ternary_layers() {
        let mut scene = TernaryScene::new(["A".into(), "B".into(), "C".into()], 300.0);
        let err = scene.push_layer(Layer::Points {
            group: GroupLabel::One,
            points: vec![Composition::uniform(4).unwrap()],
            radii: None,
        });
        assert!(err.is_err());
    }

    #[test]
    fn flat_density_has_no_contours() {
        let params = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        // Constant density Γ(3) = 2: any other level has no crossings.
        let lines = density_contours(&params, &[0.5, 5.0], 64).unwrap();
        assert!(lines.is_empty());
    }

    #[test]
    fn level_above_max_is_empty() {
        let params = DirichletParams::new(vec![4.0, 5.0, 6.0]).unwrap();
        let lines = density_contours(&params, &[1e9], 64).unwrap();
        assert!(lines.is_empty());
    }

    #[test]
    fn symmetric_density_gives_symmetric_grid_values() {
        // Permuting barycentric coordinates leaves the alpha=(5,5,5) density
        // invariant, so grid values at permuted nodes agree.
        let params = DirichletParams::new(vec![5.0, 5.0, 5.0]).unwrap();
        let probe = [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.05, 0.05, 0.9]];
        for p in probe {
            let base = log_density(&params, &Composition::new(p.to_vec()).unwrap()).unwrap();
            let perms = [[p[1], p[2], p[0]], [p[2], p[0], p[1]], [p[0], p[2], p[1]]];
            for q in perms {
                let v = log_density(&params, &Composition::new(q.to_vec()).unwrap()).unwrap();
                assert_abs_diff_eq!(base, v, epsilon = 1e-12);
            }
        }
        // And a level below the mode yields nonempty, in-triangle contours.
        let mode = log_density(&params, &Composition::uniform(3).unwrap()).unwrap();
        let level = (mode - 1.0).exp();
        let lines = density_contours(&params, &[level], 128).unwrap();
        assert!(!lines.is_empty());
        for line in &lines {
            for &(x, y) in line {
                assert!((-1e-9..=1.0 + 1e-9).contains(&x));
                assert!((-1e-9..=SQRT3_HALF + 1e-9).contains(&y));
            }
        }
    }
}
