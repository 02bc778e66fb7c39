//! SVG figures, rendered from the serialized reports only.

use std::fmt::Write;

use lorenz_core::manifolds::GapCertificate;
use lorenz_core::specification::ObstructionReport;

use crate::commands::ReturnMapSummary;

/// A rectangular plot area mapping data coordinates to pixels.
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn frame(&mut self, p: &Panel) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            p.x0, p.y0, p.w, p.h
        );
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="{width}"/>"#,
            a.0, a.1, b.0, b.1
        );
    }

    fn circle(&mut self, c: (f64, f64), r: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#,
            c.0, c.1
        );
    }

    fn rect(&mut self, a: (f64, f64), b: (f64, f64), color: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35"/>"#,
            a.0.min(b.0),
            a.1.min(b.1),
            (b.0 - a.0).abs(),
            (b.1 - a.1).abs()
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let mut d = String::new();
        for (x, y) in pts {
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
    }

    fn text(&mut self, at: (f64, f64), s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{s}</text>"#,
            at.0, at.1
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

/// Σ with the separatrix trace and the stable strip, and the
/// strong-unstable axis with the projected points and the gap.
pub fn gap_figure(json: &str) -> serde_json::Result<String> {
    let c: GapCertificate = serde_json::from_str(json)?;
    let mut svg = Svg::new(720.0, 360.0);
    let sigma = Panel {
        x0: 40.0,
        y0: 40.0,
        w: 280.0,
        h: 280.0,
        xr: (-1.0, 1.0),
        yr: (-1.0, 1.0),
    };
    svg.frame(&sigma);
    svg.text(
        (40.0, 28.0),
        &format!("Σ, separatrix up to T = {}", c.t_used),
    );
    svg.rect(
        (sigma.px(c.x_star + c.strip.0), sigma.py(c.y_star - c.mu)),
        (sigma.px(c.x_star + c.strip.1), sigma.py(c.y_star + c.mu)),
        "#2a9d8f",
    );
    for q in &c.sigma_trace {
        svg.circle((sigma.px(q.x), sigma.py(q.y)), 2.5, "#e76f51");
    }
    svg.circle((sigma.px(c.x_star), sigma.py(c.y_star)), 3.5, "#264653");
    let axis = Panel {
        x0: 380.0,
        y0: 160.0,
        w: 300.0,
        h: 40.0,
        xr: (-c.mu_u, c.mu_u),
        yr: (0.0, 1.0),
    };
    svg.text((380.0, 140.0), "strong-unstable coordinate u");
    svg.line(
        (axis.px(-c.mu_u), axis.py(0.5)),
        (axis.px(c.mu_u), axis.py(0.5)),
        "#444",
        1.0,
    );
    svg.line(
        (axis.px(c.gap_interval.0), axis.py(0.5)),
        (axis.px(c.gap_interval.1), axis.py(0.5)),
        "#2a9d8f",
        5.0,
    );
    for u in &c.projected_points {
        svg.line(
            (axis.px(*u), axis.py(0.0)),
            (axis.px(*u), axis.py(1.0)),
            "#e76f51",
            2.0,
        );
    }
    svg.text(
        (380.0, 240.0),
        &format!(
            "clearance {:.4}, d* {:.5} (h = {})",
            c.clearance, c.d_star, c.h
        ),
    );
    Ok(svg.finish())
}

/// Graph of α with the diagonal and the lowest periodic cycle.
pub fn return_map_figure(json: &str) -> serde_json::Result<String> {
    let s: ReturnMapSummary = serde_json::from_str(json)?;
    let mut svg = Svg::new(400.0, 400.0);
    let p = Panel {
        x0: 40.0,
        y0: 40.0,
        w: 320.0,
        h: 320.0,
        xr: (-1.0, 1.0),
        yr: (-1.0, 1.0),
    };
    svg.frame(&p);
    svg.text((40.0, 28.0), "one-dimensional return map α");
    svg.line(
        (p.px(-1.0), p.py(-1.0)),
        (p.px(1.0), p.py(1.0)),
        "#bbb",
        1.0,
    );
    for sign in [-1.0, 1.0] {
        let pts: Vec<(f64, f64)> = s
            .alpha_samples
            .iter()
            .filter(|q: &&[f64; 2]| q[0] * sign > 0.0)
            .map(|q| (p.px(q[0]), p.py(q[1])))
            .collect();
        svg.polyline(&pts, "#264653");
    }
    for q in &s.cycle {
        svg.circle((p.px(q[0]), p.py(q[1])), 3.5, "#e76f51");
    }
    Ok(svg.finish())
}

/// Best deviation against `eps` and `d*` for each row of the sweep.
pub fn obstruction_figure(json: &str) -> serde_json::Result<String> {
    let r: ObstructionReport = serde_json::from_str(json)?;
    let rows: Vec<_> = r.rows.iter().chain(&r.sanity_rows).collect();
    let top = rows
        .iter()
        .map(|row| row.eps.max(row.result.deviation()).max(row.d_star))
        .fold(0.0f64, f64::max)
        * 1.1;
    let mut svg = Svg::new(560.0, 340.0);
    let p = Panel {
        x0: 50.0,
        y0: 40.0,
        w: 460.0,
        h: 240.0,
        xr: (0.0, rows.len() as f64),
        yr: (0.0, top.max(1e-12)),
    };
    svg.frame(&p);
    svg.text(
        (50.0, 28.0),
        &r.summary.replace('&', "and").replace('<', "below"),
    );
    for (i, row) in rows.iter().enumerate() {
        let x = i as f64;
        let bar = |v: f64, off: f64, color: &str, svg: &mut Svg| {
            svg.rect(
                (p.px(x + off), p.py(0.0)),
                (p.px(x + off + 0.25), p.py(v)),
                color,
            );
        };
        bar(row.eps, 0.1, "#264653", &mut svg);
        bar(row.result.deviation(), 0.4, "#e76f51", &mut svg);
        svg.line(
            (p.px(x + 0.05), p.py(row.d_star)),
            (p.px(x + 0.95), p.py(row.d_star)),
            "#2a9d8f",
            2.0,
        );
        svg.text(
            (p.px(x + 0.1), 300.0),
            &format!(
                "T={} {}",
                row.t,
                if row.result.is_witness() { "W" } else { "X" }
            ),
        );
    }
    svg.text(
        (50.0, 325.0),
        "dark: eps, orange: best deviation, green: d*; W witness, X none",
    );
    Ok(svg.finish())
}
