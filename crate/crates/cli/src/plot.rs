//! Minimal SVG charts: a scatter plot and a multi-series line plot.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for &(px, py) in points {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let p = 0.05 * (hi - lo);
                (lo - p, hi + p)
            }
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn sx(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str, xlabel: &str, ylabel: &str, frame: &Frame, note: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    );
    if !note.is_empty() {
        s += &format!("<!-- {} -->\n", escape(note).replace("--", "- -"));
    }
    s += &format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n");
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    s += &format!("<path d=\"M{l} {t} L{l} {b} L{r} {b}\" stroke=\"black\" fill=\"none\"/>\n");
    for i in 0..=4 {
        let fx = frame.x.0 + (frame.x.1 - frame.x.0) * f64::from(i) / 4.0;
        let fy = frame.y.0 + (frame.y.1 - frame.y.0) * f64::from(i) / 4.0;
        s += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            frame.sx(fx),
            b + 16.0,
            tick(fx)
        );
        s += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            l - 6.0,
            frame.sy(fy) + 4.0,
            tick(fy)
        );
    }
    s += &format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    );
    s += &format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(xlabel)
    );
    s += &format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

pub fn scatter_svg(points: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str, note: &str) -> String {
    let frame = Frame::fit(points.iter());
    let mut s = header(title, xlabel, ylabel, &frame, note);
    for &(x, y) in points {
        s += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
            frame.sx(x),
            frame.sy(y),
            COLORS[0]
        );
    }
    s + "</svg>\n"
}

pub fn lines_svg(series: &[(&str, Vec<(f64, f64)>)], title: &str, xlabel: &str, ylabel: &str, note: &str) -> String {
    let frame = Frame::fit(series.iter().flat_map(|(_, pts)| pts.iter()));
    let mut s = header(title, xlabel, ylabel, &frame, note);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, frame.sx(x), frame.sy(y)))
            .collect();
        s += &format!("<path d=\"{}\" stroke=\"{color}\" stroke-width=\"1.8\" fill=\"none\"/>\n", d.join(" "));
        s += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN - 110.0,
            MARGIN + 16.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s + "</svg>\n"
}
