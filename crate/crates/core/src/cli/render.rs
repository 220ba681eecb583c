//! Standalone SVG scatter plots of 2D / 3D embeddings, coloured by style.

use std::fmt::Write as _;

use crate::graph::style_color;
use crate::manifest::StyleClass;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 560.0;
const MARGIN: f64 = 30.0;
const LEGEND_WIDTH: f64 = 170.0;
const UNKNOWN_COLOR: &str = "#7f7f7f";
/// 3D points are rotated by these angles (radians) about the vertical and
/// horizontal axes and then projected orthographically.
const YAW: f64 = 0.6;
const PITCH: f64 = 0.35;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub id: String,
    pub coords: Vec<f64>,
    pub style: Option<StyleClass>,
}

/// Reads `id,x,y[,z],style` rows. A blank style is allowed.
pub fn read_scatter_csv(bytes: &[u8]) -> Result<(usize, Vec<ScatterPoint>), String> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let dims = match cols.as_slice() {
        [_, "x", "y", "style"] => 2,
        [_, "x", "y", "z", "style"] => 3,
        _ => return Err(format!("expected id,x,y[,z],style header, got {}", cols.join(","))),
    };
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let coords = (1..=dims)
            .map(|i| {
                rec[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("line {line}: bad coordinate {:?}", &rec[i]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let style = match &rec[dims + 1] {
            "" => None,
            s => Some(
                s.parse::<StyleClass>()
                    .map_err(|e| format!("line {line}: {e}"))?,
            ),
        };
        points.push(ScatterPoint {
            id: rec[0].to_string(),
            coords,
            style,
        });
    }
    Ok((dims, points))
}

fn project(p: &[f64]) -> (f64, f64) {
    if p.len() == 2 {
        return (p[0], p[1]);
    }
    let (x, y, z) = (p[0], p[1], p[2]);
    let (sy, cy) = YAW.sin_cos();
    let (sp, cp) = PITCH.sin_cos();
    let x1 = x * cy + z * sy;
    let z1 = -x * sy + z * cy;
    let y1 = y * cp - z1 * sp;
    (x1, y1)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG with one circle per point and a legend listing all nine classes.
pub fn render_scatter(points: &[ScatterPoint], title: &str) -> String {
    let projected: Vec<(f64, f64)> = points.iter().map(|p| project(&p.coords)).collect();
    let plot_w = WIDTH - LEGEND_WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &projected {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (plot_w / span(x0, x1), plot_h / span(y0, y1));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN:.3}\" y=\"{MARGIN:.3}\" width=\"{plot_w:.3}\" height=\"{plot_h:.3}\" fill=\"none\" stroke=\"#cccccc\"/>"
    );
    out.push_str("<g id=\"points\">\n");
    for (p, &(x, y)) in points.iter().zip(&projected) {
        let cx = MARGIN + (x - x0) * sx;
        // SVG y grows downwards
        let cy = MARGIN + plot_h - (y - y0) * sy;
        let color = p.style.map(style_color).unwrap_or(UNKNOWN_COLOR);
        let _ = writeln!(
            out,
            "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.8\"><title>{}</title></circle>",
            escape(&p.id)
        );
    }
    out.push_str("</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let lx = WIDTH - LEGEND_WIDTH;
    for (i, style) in StyleClass::ALL.iter().enumerate() {
        let ly = MARGIN + 20.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.3}\" y=\"{ly:.3}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{:.3}\" y=\"{:.3}\">{}</text>",
            style_color(*style),
            lx + 18.0,
            ly + 10.0,
            escape(style.display_name())
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_class_gives_nine_legend_entries() {
        let points: Vec<_> = StyleClass::ALL
            .iter()
            .enumerate()
            .map(|(i, &s)| ScatterPoint {
                id: format!("p{i}"),
                coords: vec![i as f64, (i * i) as f64],
                style: Some(s),
            })
            .collect();
        let svg = render_scatter(&points, "t");
        assert_eq!(svg.matches("<circle").count(), 9);
        let legend = &svg[svg.find("id=\"legend\"").unwrap()..];
        assert_eq!(legend.matches("<text").count(), 9);
        let colors: std::collections::BTreeSet<_> = StyleClass::ALL.iter().map(|&s| style_color(s)).collect();
        assert_eq!(colors.len(), 9);
        assert_eq!(svg, render_scatter(&points, "t"));
    }

    #[test]
    fn empty_plot_keeps_legend() {
        let svg = render_scatter(&[], "empty");
        assert_eq!(svg.matches("<circle").count(), 0);
        assert_eq!(svg.matches("<text").count(), 9);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn reads_two_and_three_dimensional_csv() {
        let (d, pts) = read_scatter_csv(b"painting_id,x,y,style\na,1,2,Cubism\nb,0.5,-1,\n").unwrap();
        assert_eq!(d, 2);
        assert_eq!(pts[0].style, Some(StyleClass::Cubism));
        assert_eq!(pts[1].style, None);
        let (d, pts) = read_scatter_csv(b"id,x,y,z,style\na,1,2,3,Baroque\n").unwrap();
        assert_eq!(d, 3);
        assert_eq!(pts[0].coords, vec![1.0, 2.0, 3.0]);
        assert!(read_scatter_csv(b"id,x,style\n").is_err());
        assert!(read_scatter_csv(b"id,x,y,style\na,1,nan,Cubism\n").is_err());
        assert!(read_scatter_csv(b"id,x,y,style\na,1,2,Fauvism\n").is_err());
    }

    #[test]
    fn projection_is_fixed() {
        assert_eq!(project(&[1.0, 2.0]), (1.0, 2.0));
        let (x, y) = project(&[0.0, 1.0, 0.0]);
        assert!(x.abs() < 1e-15 && (y - PITCH.cos()).abs() < 1e-15);
    }
}
