//! Minimal SVG line charts. Every plotted number comes from a CSV column.

use std::fmt::Write;

use karlin::experiments::Table;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

/// Lines of `ys` against `x`, NaN points skipped. `log_x` plots log10 of x.
pub fn line_chart(table: &Table, x: &str, ys: &[&str], log_x: bool) -> Option<String> {
    let xs = table.column(x)?;
    let series: Vec<(&str, Vec<f64>)> = ys.iter().filter_map(|y| Some((*y, table.column(y)?))).collect();
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let pts = |ys: &[f64]| -> Vec<(f64, f64)> {
        xs.iter().zip(ys).filter(|(a, b)| a.is_finite() && b.is_finite() && (!log_x || **a > 0.0)).map(|(a, b)| (tx(*a), *b)).collect()
    };
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, s)| pts(s)).collect();
    if all.is_empty() {
        return None;
    }
    let (mut x0, mut x1) = bounds(all.iter().map(|p| p.0));
    let (mut y0, mut y1) = bounds(all.iter().map(|p| p.1));
    widen(&mut x0, &mut x1);
    widen(&mut y0, &mut y1);
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(&table.name));
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let xl = if log_x { format!("1e{xv:.1}") } else { format!("{xv:.3}") };
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xl}</text>"#, sx(xv), H - PAD + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, PAD - 4.0, sy(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x));
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts(ys).iter().map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD + 4.0 - 60.0,
            PAD + 14.0 + 14.0 * i as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn widen(lo: &mut f64, hi: &mut f64) {
    if *hi - *lo < 1e-12 {
        *lo -= 0.5;
        *hi += 0.5;
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
