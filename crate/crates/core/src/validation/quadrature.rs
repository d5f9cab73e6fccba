//! Adaptive Gauss–Kronrod (7/15) quadrature, used as an independent check on
//! closed-form special functions.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol`. A panel
/// also stops once its error estimate reaches rounding level.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || err <= 50.0 * f64::EPSILON * value.abs() || depth == 0 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth - 1) + recurse(f, mid, b, 0.5 * tol, depth - 1)
    }
    recurse(f, a, b, abs_tol, 30)
}

/// `∫₁^∞ e^{-zt} tⁿ dt` by direct quadrature.
pub fn exp_integral_neg_order_quadrature(n: u64, z: f64) -> f64 {
    let nf = n as f64;
    let log_integrand = |t: f64| -z * t + nf * t.ln();
    let peak = (nf / z).max(1.0);
    let log_peak = log_integrand(peak);
    // Walk right until the integrand is e^{-60} below its peak.
    let width = (nf.sqrt() + 1.0) / z;
    let mut end = peak + width;
    while log_integrand(end) > log_peak - 60.0 {
        end += width;
    }
    let f = |t: f64| log_integrand(t).exp();
    // Rough magnitude from a coarse pass sets the absolute tolerance.
    let rough = log_peak.exp() * (end - 1.0);
    let tol = 1e-15 * rough;
    let mut total = 0.0;
    let mut breaks = vec![1.0];
    if peak > 1.0 {
        breaks.push(peak);
    }
    breaks.push(end);
    for w in breaks.windows(2) {
        // Panels of one characteristic width keep each GK rule well resolved.
        let panels = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        let step = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let a = w[0] + k as f64 * step;
            total += integrate(&f, a, a + step, tol / panels as f64);
        }
    }
    total
}
