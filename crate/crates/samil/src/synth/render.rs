//! Per-instance image synthesis. Two view types carry the label signal as a
//! bright ring whose thickness and contrast grow with severity; three don't:
//! soft diagonal stripes, a decoy ring drawn at a study-coherent fake
//! severity with a zero-mean angular shading (same geometry, same mean image
//! as a marker, so label-driven attention is actively misled; the bright/dim
//! arc pair is the one tell, and it says nothing about the label), and
//! vertical bars whose strength tracks the same study-level nuisance factor
//! that sets the fake severity.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::generate::GeneratorConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ViewType {
    /// Severity-coded ring, larger geometry.
    RelevantA,
    /// Severity-coded ring, smaller geometry.
    RelevantB,
    /// Diagonal sinusoid texture; ignores severity.
    Stripes,
    /// Angularly shaded marker-shaped ring at a nuisance-driven fake
    /// severity; ignores the label.
    DecoyRing,
    /// Vertical bars scaled by the study nuisance factor; ignores severity.
    Bars,
}

impl ViewType {
    pub fn is_relevant(self) -> bool {
        matches!(self, ViewType::RelevantA | ViewType::RelevantB)
    }

    pub fn code(self) -> u8 {
        match self {
            ViewType::RelevantA => 0,
            ViewType::RelevantB => 1,
            ViewType::Stripes => 2,
            ViewType::DecoyRing => 3,
            ViewType::Bars => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ViewType::RelevantA),
            1 => Some(ViewType::RelevantB),
            2 => Some(ViewType::Stripes),
            3 => Some(ViewType::DecoyRing),
            4 => Some(ViewType::Bars),
            _ => None,
        }
    }
}

/// Severity-parameterized annulus shared by the true markers and the decoy.
/// `sev` is continuous so a decoy can land anywhere inside the marker band.
/// `shading` = (depth, phase) tilts the ring into a bright arc opposite a dim
/// arc; the cos(2θ) factor is zero-mean around the ring, so the decoy's mean
/// image matches a marker's and the tell lives only in angular structure —
/// deterministic, learnable, yet carrying no label signal.
///
/// The severity response is monotone but deliberately uneven (0 → 0.3 → 1.0
/// of the span): the extreme pair stays linearly separable per instance
/// while adjacent severities are subtle enough that reading them through a
/// bag demands clean attention.
fn draw_ring(
    img: &mut [f64],
    side: usize,
    big: bool,
    sev: f64,
    scale: f64,
    shading: Option<(f64, f64)>,
    rng: &mut impl Rng,
) {
    let s = side as f64;
    let (r_base, t_base, t_span, a_base, a_span, jitter) = if big {
        (0.29 * s, 0.055 * s, 0.032 * s, 0.16, 0.16, 0.065 * s)
    } else {
        (0.19 * s, 0.050 * s, 0.028 * s, 0.14, 0.15, 0.095 * s)
    };
    let resp = if sev <= 1.0 { 0.3 * sev } else { 0.3 + 0.7 * (sev - 1.0) };
    let cx = (s - 1.0) / 2.0 + rng.gen_range(-jitter..jitter);
    let cy = (s - 1.0) / 2.0 + rng.gen_range(-jitter..jitter);
    let radius = r_base + rng.gen_range(-0.03 * s..0.03 * s);
    let thick = t_base + t_span * resp + rng.gen_range(-0.008 * s..0.008 * s);
    let amp = (a_base + a_span * resp) * scale + rng.gen_range(-0.03..0.03);
    for y in 0..side {
        for x in 0..side {
            let dist = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let d = dist - radius;
            let mut a = amp;
            if let Some((b, phase)) = shading {
                let theta = (y as f64 - cy).atan2(x as f64 - cx);
                a *= 1.0 - b * (2.0 * (theta - phase)).cos();
            }
            img[y * side + x] += a * (-d * d / (2.0 * thick * thick)).exp();
        }
    }
}

/// One side² image in [0,1]. `severity` is read only by the relevant views;
/// `nuisance` only by [`ViewType::Bars`] and [`ViewType::DecoyRing`]. Every
/// random draw comes from `rng`, so a fixed stream reproduces the image
/// exactly.
pub fn render_instance(
    view: ViewType,
    severity: u8,
    nuisance: f64,
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Vec<f32> {
    let side = cfg.image_side;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut img: Vec<f64> =
        (0..side * side).map(|_| 0.30 + 0.06 * normal.sample(rng)).collect();

    match view {
        ViewType::RelevantA | ViewType::RelevantB => {
            let big = view == ViewType::RelevantA;
            draw_ring(&mut img, side, big, severity as f64, cfg.signal_scale, None, rng);
        }
        ViewType::Stripes => {
            let amp = rng.gen_range(0.10..0.30);
            let freq = rng.gen_range(0.6..1.4);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let (ca, sa) = (angle.cos(), angle.sin());
            for y in 0..side {
                for x in 0..side {
                    let u = x as f64 * ca + y as f64 * sa;
                    img[y * side + x] += amp * 0.5 * (1.0 + (freq * u + phase).sin());
                }
            }
        }
        ViewType::DecoyRing => {
            let big = rng.gen_bool(0.5);
            // Decoys in one study agree on a fake severity read from the
            // study nuisance factor, so pooling that attends them sees a
            // coherent severity story that's pure noise w.r.t. the label.
            let center = 1.0 + 2.0 * cfg.distractor_corr * (nuisance - 0.5);
            let fake_sev = (center + rng.gen_range(-0.35..0.35)).clamp(0.0, 2.0);
            let phase = rng.gen_range(0.0..std::f64::consts::PI);
            let shading = Some((0.55, phase));
            draw_ring(&mut img, side, big, fake_sev, cfg.signal_scale, shading, rng);
        }
        ViewType::Bars => {
            let amp = (0.08 + cfg.distractor_corr * 0.35 * nuisance
                + rng.gen_range(-0.04..0.04))
                .max(0.0);
            let freq = rng.gen_range(1.0..2.2);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            for y in 0..side {
                for x in 0..side {
                    img[y * side + x] += amp * 0.5 * (1.0 + (freq * x as f64 + phase).sin());
                }
            }
        }
    }

    img.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn cfg() -> GeneratorConfig {
        GeneratorConfig::default()
    }

    #[test]
    fn irrelevant_views_ignore_severity() {
        for view in [ViewType::Stripes, ViewType::DecoyRing, ViewType::Bars] {
            let a = render_instance(view, 0, 0.4, &cfg(), &mut stream(3, &[1]));
            let b = render_instance(view, 2, 0.4, &cfg(), &mut stream(3, &[1]));
            assert_eq!(a, b, "{view:?} leaked severity into pixels");
        }
    }

    #[test]
    fn relevant_views_react_to_severity() {
        for view in [ViewType::RelevantA, ViewType::RelevantB] {
            let a = render_instance(view, 0, 0.4, &cfg(), &mut stream(4, &[2]));
            let b = render_instance(view, 2, 0.4, &cfg(), &mut stream(4, &[2]));
            assert_ne!(a, b, "{view:?} did not react to severity");
        }
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let mut rng = stream(5, &[3]);
        for view in
            [ViewType::RelevantA, ViewType::RelevantB, ViewType::Stripes, ViewType::DecoyRing, ViewType::Bars]
        {
            for sev in 0..3u8 {
                let img = render_instance(view, sev, 0.9, &cfg(), &mut rng);
                assert!(img.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }

    #[test]
    fn severity_raises_mean_ring_intensity() {
        // statistical monotonicity over many draws
        let mut means = [0.0f64; 3];
        for sev in 0..3u8 {
            let mut acc = 0.0;
            for i in 0..200 {
                let img =
                    render_instance(ViewType::RelevantA, sev, 0.5, &cfg(), &mut stream(6, &[i]));
                acc += img.iter().map(|&p| p as f64).sum::<f64>() / img.len() as f64;
            }
            means[sev as usize] = acc / 200.0;
        }
        assert!(means[0] < means[1] && means[1] < means[2], "means {means:?} not monotone");
    }

    #[test]
    fn nuisance_scales_bars() {
        let mut lo_acc = 0.0;
        let mut hi_acc = 0.0;
        for i in 0..100 {
            let lo = render_instance(ViewType::Bars, 1, 0.0, &cfg(), &mut stream(7, &[i]));
            let hi = render_instance(ViewType::Bars, 1, 1.0, &cfg(), &mut stream(7, &[i]));
            lo_acc += lo.iter().map(|&p| p as f64).sum::<f64>();
            hi_acc += hi.iter().map(|&p| p as f64).sum::<f64>();
        }
        assert!(hi_acc > lo_acc, "nuisance factor has no effect on bars");
    }

    /// Decoy rings must span the marker's intensity band, not sit at one
    /// severity — otherwise attention could separate them by brightness.
    #[test]
    fn decoy_intensity_spans_the_marker_band() {
        let c = cfg();
        let mean_of = |img: &[f32]| img.iter().map(|&p| p as f64).sum::<f64>() / img.len() as f64;
        let decoys: Vec<f64> = (0..200)
            .map(|i| mean_of(&render_instance(ViewType::DecoyRing, 0, 0.5, &c, &mut stream(10, &[i]))))
            .collect();
        let mut mid = 0.0;
        for i in 0..200u64 {
            mid += mean_of(&render_instance(ViewType::RelevantA, 1, 0.5, &c, &mut stream(11, &[i])));
        }
        mid /= 200.0;
        let lo = decoys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = decoys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo < mid && mid < hi, "decoy band [{lo}, {hi}] misses severity-1 mean {mid}");
    }

    #[test]
    fn replays_bitwise() {
        let a = render_instance(ViewType::DecoyRing, 1, 0.2, &cfg(), &mut stream(8, &[4]));
        let b = render_instance(ViewType::DecoyRing, 1, 0.2, &cfg(), &mut stream(8, &[4]));
        assert_eq!(a, b);
    }

    /// Ridge regression on raw pixels must separate severity 0 from 2 on
    /// relevant views — the signal has to be linearly learnable or nothing
    /// downstream stands a chance.
    #[test]
    fn severity_signal_is_linearly_separable() {
        use nalgebra::{DMatrix, DVector};
        let c = cfg();
        let n_per = 150;
        let d = c.image_side * c.image_side;
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for i in 0..n_per as u64 {
            for (sev, y) in [(0u8, -1.0), (2u8, 1.0)] {
                let vt = if i % 2 == 0 { ViewType::RelevantA } else { ViewType::RelevantB };
                let img = render_instance(vt, sev, 0.5, &c, &mut stream(9, &[i, sev as u64]));
                xs.extend(img.iter().map(|&p| p as f64));
                ys.push(y);
            }
        }
        let n = ys.len();
        let n_train = n * 3 / 4;
        let x = DMatrix::from_row_slice(n, d, &xs);
        let y = DVector::from_vec(ys);
        let xt = x.rows(0, n_train);
        let yt = y.rows(0, n_train);
        let gram = xt.transpose() * xt + DMatrix::identity(d, d) * 1e-3;
        let w = gram.lu().solve(&(xt.transpose() * yt)).expect("ridge solve");
        let mut correct = 0;
        for i in n_train..n {
            let score: f64 = x.row(i).transpose().dot(&w);
            if (score > 0.0) == (y[i] > 0.0) {
                correct += 1;
            }
        }
        let acc = correct as f64 / (n - n_train) as f64;
        assert!(acc > 0.9, "linear probe accuracy {acc} too low; signal miscalibrated");
    }
}
