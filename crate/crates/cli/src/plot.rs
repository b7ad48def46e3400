//! SVG scatter of chart coordinates colored by true position.

use std::fmt::Write;

use pcc_core::{Rect, Vec2};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

/// HSL color: hue follows x and lightness follows y across `zone`.
pub fn position_color(p: Vec2, zone: &Rect) -> String {
    let u = ((p.x - zone.min[0]) / zone.width()).clamp(0.0, 1.0);
    let v = ((p.y - zone.min[1]) / zone.height()).clamp(0.0, 1.0);
    format!("hsl({:.1},80%,{:.1}%)", 300.0 * u, 25.0 + 50.0 * v)
}

/// Renders every `every`-th point. `points` and `truth` are parallel.
pub fn render_svg(points: &[Vec2], truth: &[Vec2], zone: &Rect, every: usize) -> String {
    let every = every.max(1);
    let chosen: Vec<usize> = (0..points.len().min(truth.len())).step_by(every).collect();
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for &i in &chosen {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let span = (hi - lo).max().max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for &i in &chosen {
        let p = points[i];
        let x = MARGIN + (p.x - lo.x) * scale;
        // SVG y grows downwards.
        let y = SIZE - MARGIN - (p.y - lo.y) * scale;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}"/>"#,
            position_color(truth[i], zone)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_marker_per_subsampled_point() {
        let zone = Rect::new(0.0, 0.0, 5.0, 4.0);
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64, 0.5 * i as f64)).collect();
        let svg = render_svg(&pts, &pts, &zone, 3);
        assert_eq!(svg.matches("<circle").count(), 4);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn same_position_same_color() {
        let zone = Rect::new(0.0, 0.0, 5.0, 4.0);
        let p = Vec2::new(1.2, 3.3);
        assert_eq!(position_color(p, &zone), position_color(p, &zone));
        assert_ne!(
            position_color(p, &zone),
            position_color(Vec2::new(4.0, 3.3), &zone)
        );
    }
}
