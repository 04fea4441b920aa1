//! Static SVG renderings of occupancy grids and planar curves.

use std::fmt::Write;

use finsler_core::control::ReachGrid;

const WIDTH: f64 = 600.0;
const MARGIN: f64 = 20.0;

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        w = width,
        h = height
    )
}

/// Affine map from a data rectangle onto the drawing area, `y` pointing up.
struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl Frame {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> (Self, f64) {
        let span_x = (x_max - x_min).max(1e-12);
        let span_y = (y_max - y_min).max(1e-12);
        let scale = (WIDTH - 2.0 * MARGIN) / span_x;
        let height = span_y * scale + 2.0 * MARGIN;
        (Self { x0: x_min, y1: y_max, scale }, height)
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (MARGIN + (x - self.x0) * self.scale, MARGIN + (self.y1 - y) * self.scale)
    }
}

fn polyline(frame: &Frame, points: &[(f64, f64)], style: &str) -> String {
    let mut coords = String::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let (u, v) = frame.px(x, y);
        if i > 0 {
            coords.push(' ');
        }
        let _ = write!(coords, "{u:.2},{v:.2}");
    }
    format!("<polyline points=\"{coords}\" fill=\"none\" {style}/>\n")
}

/// Occupied cells in blue; with `cone_slope`, the boundary `y = slope·|x|`
/// dashed in red.
pub fn grid_svg(grid: &ReachGrid, cone_slope: Option<f64>) -> String {
    let w = grid.window;
    let (frame, height) = Frame::new(w.x_min, w.x_max, w.y_min, w.y_max);
    let mut out = header(WIDTH, height);
    let cell = grid.resolution * frame.scale;
    out.push_str("<g fill=\"#3b6ea5\">\n");
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if grid.occupied(i, j) {
                let x = w.x_min + i as f64 * grid.resolution;
                let y = w.y_min + (j + 1) as f64 * grid.resolution;
                let (u, v) = frame.px(x, y);
                let _ = writeln!(out, "<rect x=\"{u:.2}\" y=\"{v:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\"/>");
            }
        }
    }
    out.push_str("</g>\n");
    let (u0, v0) = frame.px(w.x_min, w.y_min);
    let (u1, v1) = frame.px(w.x_max, w.y_max);
    let _ = writeln!(
        out,
        "<rect x=\"{u0:.2}\" y=\"{v1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        u1 - u0,
        v0 - v1
    );
    if let Some(k) = cone_slope {
        let pts = [(w.x_min, k * w.x_min.abs()), (0.0, 0.0), (w.x_max, k * w.x_max.abs())];
        out.push_str(&polyline(&frame, &pts, "stroke=\"#c0392b\" stroke-width=\"2\" stroke-dasharray=\"6 4\""));
    }
    out.push_str("</svg>\n");
    out
}

/// A planar curve in black with an optional overlay curve dashed in red.
pub fn curve_svg(curve: &[(f64, f64)], overlay: Option<&[(f64, f64)]>) -> String {
    let all = curve.iter().chain(overlay.unwrap_or(&[]));
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = 0.05 * (x_max - x_min).max(y_max - y_min).max(1e-9);
    let (frame, height) = Frame::new(x_min - pad, x_max + pad, y_min - pad, y_max + pad);
    let mut out = header(WIDTH, height);
    if let Some(o) = overlay {
        out.push_str(&polyline(&frame, o, "stroke=\"#c0392b\" stroke-width=\"2\" stroke-dasharray=\"6 4\""));
    }
    out.push_str(&polyline(&frame, curve, "stroke=\"black\" stroke-width=\"1.5\""));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use finsler_core::control::Window;

    #[test]
    fn grid_rendering_counts_cells() {
        let mut grid = ReachGrid::new(Window::new(-1.0, 1.0, 0.0, 1.0).unwrap(), 0.5).unwrap();
        grid.mark(0.1, 0.1);
        grid.mark(-0.9, 0.9);
        let svg = grid_svg(&grid, Some(0.5));
        assert_eq!(svg.matches("<rect x=").count(), 3);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn curve_rendering() {
        let svg = curve_svg(&[(0.0, 0.0), (1.0, 2.0)], Some(&[(0.0, 0.0), (1.0, 0.0)]));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(curve_svg(&[], None).matches("<polyline").count(), 1);
    }
}
