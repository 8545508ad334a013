//! Globally adaptive 21-point Gauss–Kronrod quadrature over real or complex
//! valued integrands.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn norm(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn norm(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(&self) -> f64 {
        Complex64::norm(*self)
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_908_177_746,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Weights of the embedded 10-point Gauss rule, paired with XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// One Kronrod panel: `(estimate, error estimate)` with the customary
/// rescaling of `|K21 - G10|`.
pub fn gk21<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut vals = [(fc, fc); 10];
    let mut k = fc * WGK[10];
    let mut g = T::zero();
    let mut resabs = WGK[10] * fc.norm();
    for i in 0..10 {
        let dx = h * XGK[i];
        let (f1, f2) = (f(c - dx), f(c + dx));
        vals[i] = (f1, f2);
        k = k + (f1 + f2) * WGK[i];
        resabs += WGK[i] * (f1.norm() + f2.norm());
        if i % 2 == 1 {
            g = g + (f1 + f2) * WG[i / 2];
        }
    }
    let mean = k * 0.5;
    let mut resasc = WGK[10] * (fc - mean).norm();
    for i in 0..10 {
        resasc += WGK[i] * ((vals[i].0 - mean).norm() + (vals[i].1 - mean).norm());
    }
    let h_abs = h.abs();
    let (resabs, resasc) = (resabs * h_abs, resasc * h_abs);
    let mut err = ((k - g) * h).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (k * h, err)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_panels: 2000,
        }
    }
}

impl QuadOpts {
    pub fn abs(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<T, F>(f: F, a: f64, b: f64, opts: QuadOpts) -> QuadResult<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    integrate_breaks(f, &[a, b], opts)
}

/// Integrates over `[points[0], points[last]]`, starting from the partition
/// given by `points` (sorted ascending; duplicates are skipped).
pub fn integrate_breaks<T, F>(mut f: F, points: &[f64], opts: QuadOpts) -> QuadResult<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk21(&mut f, w[0], w[1]);
            heap.push(Panel {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
    }
    let total = |heap: &BinaryHeap<Panel<T>>| {
        let mut panels: Vec<&Panel<T>> = heap.iter().collect();
        panels.sort_by(|p, q| p.a.total_cmp(&q.a));
        let mut v = T::zero();
        let mut e = 0.0;
        for p in panels {
            v = v + p.value;
            e += p.error;
        }
        (v, e)
    };
    if heap.is_empty() {
        return QuadResult {
            value: T::zero(),
            error: 0.0,
            panels: 0,
            converged: true,
        };
    }

    let (mut val_sum, mut err_sum) = total(&heap);
    let mut since_refresh = 0;
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * val_sum.norm());
        if err_sum <= target {
            let (v, e) = total(&heap);
            if e <= opts.abs_tol.max(opts.rel_tol * v.norm()) {
                break;
            }
            val_sum = v;
            err_sum = e;
        }
        if heap.len() >= opts.max_panels {
            break;
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // Panel too narrow to split further.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(&mut f, worst.a, m);
        let (v2, e2) = gk21(&mut f, m, worst.b);
        err_sum += e1 + e2 - worst.error;
        val_sum = val_sum + v1 + v2 - worst.value;
        heap.push(Panel {
            a: worst.a,
            b: m,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: m,
            b: worst.b,
            value: v2,
            error: e2,
        });
        since_refresh += 1;
        if since_refresh >= 32 {
            // Avoid drift in the running sums.
            (val_sum, err_sum) = total(&heap);
            since_refresh = 0;
        }
    }
    let (value, error) = total(&heap);
    let target = opts.abs_tol.max(opts.rel_tol * value.norm());
    QuadResult {
        value,
        error,
        panels: heap.len(),
        converged: error <= target,
    }
}
