//! Hand-rolled SVG line plots. No library: the output must be stable
//! byte for byte under a fixed input, and the needs end at axes, a few
//! polylines, and a legend.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 360.0;

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Renders one polyline per named series over a shared epoch axis.
/// Empty series plot as axes with no line.
pub fn loss_curves(series: &[(&str, &[f64])]) -> String {
    let max_len = series.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let values = series.iter().flat_map(|(_, c)| c.iter().copied());
    let (y_min, y_max) = finite_range(values);

    let x_pos = |i: usize| {
        if max_len <= 1 {
            (LEFT + RIGHT) / 2.0
        } else {
            LEFT + (RIGHT - LEFT) * i as f64 / (max_len - 1) as f64
        }
    };
    let y_pos = |v: f64| BOTTOM - (BOTTOM - TOP) * (v - y_min) / (y_max - y_min);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" stroke=\"#333\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"#333\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
        LEFT - 6.0,
        TOP + 4.0,
        y_max
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
        LEFT - 6.0,
        BOTTOM + 4.0,
        y_min
    ));
    svg.push_str(&format!(
        "  <text x=\"{LEFT}\" y=\"{:.1}\" text-anchor=\"middle\">0</text>\n",
        BOTTOM + 16.0
    ));
    if max_len > 1 {
        svg.push_str(&format!(
            "  <text x=\"{RIGHT}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            BOTTOM + 16.0,
            max_len - 1
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">epoch</text>\n",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 6.0
    ));

    for (index, (name, curve)) in series.iter().enumerate() {
        let color = COLORS[index % COLORS.len()];
        if !curve.is_empty() {
            let points: Vec<String> = curve
                .iter()
                .enumerate()
                .map(|(i, &v)| format!("{:.2},{:.2}", x_pos(i), y_pos(v)))
                .collect();
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        let legend_y = TOP + 14.0 * index as f64 + 4.0;
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{legend_y:.1}\" fill=\"{color}\">{name}</text>\n",
            RIGHT - 110.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Y-axis bounds with a 5% pad; degenerate inputs get a unit span so
/// the mapping stays finite.
fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        min = min.min(v);
        max = max.max(v);
    }
    if min > max {
        return (0.0, 1.0);
    }
    let span = max - min;
    if span == 0.0 {
        return (min - 0.5, max + 0.5);
    }
    (min - 0.05 * span, max + 0.05 * span)
}
