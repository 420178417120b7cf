//! Minimal hand-rolled SVG emitter for log-log charts.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Dashed overlay (used for fitted lines).
    pub dashed: bool,
}

pub struct LogLogChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub footer: String,
}

const W: f64 = 820.0;
const H: f64 = 560.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 70.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl LogLogChart {
    pub fn render(&self) -> String {
        let mut lo_x = f64::INFINITY;
        let mut hi_x = f64::NEG_INFINITY;
        let mut lo_y = f64::INFINITY;
        let mut hi_y = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                if x > 0.0 && y > 0.0 {
                    lo_x = lo_x.min(x.log10());
                    hi_x = hi_x.max(x.log10());
                    lo_y = lo_y.min(y.log10());
                    hi_y = hi_y.max(y.log10());
                }
            }
        }
        if !lo_x.is_finite() {
            lo_x = 0.0;
            hi_x = 1.0;
            lo_y = 0.0;
            hi_y = 1.0;
        }
        if hi_x - lo_x < 1e-9 {
            hi_x = lo_x + 1.0;
        }
        if hi_y - lo_y < 1e-9 {
            hi_y = lo_y + 1.0;
        }
        // A little headroom.
        let pad_y = 0.05 * (hi_y - lo_y);
        let (lo_y, hi_y) = (lo_y - pad_y, hi_y + pad_y);

        let px = |lx: f64| ML + (lx - lo_x) / (hi_x - lo_x) * (W - ML - MR);
        let py = |ly: f64| H - MB - (ly - lo_y) / (hi_y - lo_y) * (H - MT - MB);

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
             viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
        ));
        out.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"22\" font-size=\"15\">{}</text>\n",
            ML,
            xml_escape(&self.title)
        ));

        // Frame.
        out.push_str(&format!(
            "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
            W - ML - MR,
            H - MT - MB
        ));

        // Decade ticks and grid lines.
        for d in (lo_x.floor() as i64)..=(hi_x.ceil() as i64) {
            let lx = d as f64;
            if lx < lo_x - 1e-9 || lx > hi_x + 1e-9 {
                continue;
            }
            let x = px(lx);
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{MT}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
                H - MB
            ));
            out.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{d}</text>\n",
                H - MB + 18.0
            ));
        }
        for d in (lo_y.floor() as i64)..=(hi_y.ceil() as i64) {
            let ly = d as f64;
            if ly < lo_y - 1e-9 || ly > hi_y + 1e-9 {
                continue;
            }
            let y = py(ly);
            out.push_str(&format!(
                "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
                W - MR
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{y:.1}\" text-anchor=\"end\">1e{d}</text>\n",
                ML - 6.0
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            ML + (W - ML - MR) / 2.0,
            H - MB + 40.0,
            xml_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"18\" y=\"{:.1}\" transform=\"rotate(-90 18 {:.1})\" text-anchor=\"middle\">{}</text>\n",
            MT + (H - MT - MB) / 2.0,
            MT + (H - MT - MB) / 2.0,
            xml_escape(&self.y_label)
        ));

        // Series.
        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|&&(x, y)| x > 0.0 && y > 0.0)
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x.log10()), py(y.log10())))
                .collect();
            if pts.len() >= 2 {
                let dash = if s.dashed {
                    " stroke-dasharray=\"6,4\""
                } else {
                    ""
                };
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"{dash} points=\"{}\"/>\n",
                    s.color,
                    pts.join(" ")
                ));
            }
            if !s.dashed {
                for p in &pts {
                    let (x, y) = p.split_once(',').unwrap();
                    out.push_str(&format!(
                        "<circle cx=\"{x}\" cy=\"{y}\" r=\"2.4\" fill=\"{}\"/>\n",
                        s.color
                    ));
                }
            }
        }

        // Legend.
        for (i, s) in self.series.iter().enumerate() {
            let y = MT + 16.0 + 16.0 * i as f64;
            out.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
                ML + 10.0,
                ML + 34.0,
                s.color,
                if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" }
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
                ML + 40.0,
                y + 4.0,
                xml_escape(&s.label)
            ));
        }

        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"#666666\">{}</text>\n",
            ML,
            H - 8.0,
            xml_escape(&self.footer)
        ));
        out.push_str("</svg>\n");
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
