//! Real-input FFT used by the spectral decomposition and the frequency flow.
//!
//! Forward transforms are unnormalized; the inverse carries the 1/L factor.
//! `rfft` keeps the non-redundant half spectrum of length `F = L/2 + 1`;
//! `irfft` reconstructs by Hermitian extension, so for any real input
//! `irfft(rfft(x), L)` returns `x` up to round-off.
//!
//! Lengths are arbitrary: composite sizes are split by smallest prime factor
//! (Cooley-Tukey), prime sizes up to 64 fall back to a direct DFT against the
//! shared twiddle table, and larger primes go through Bluestein's chirp-z
//! algorithm on a padded power-of-two grid. Benchmark series lengths are
//! frequently not powers of two (and occasionally carry prime factors in the
//! hundreds), so all three paths matter.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math;
use crate::tensor::{dim_err, ComplexTensor, Result, Tensor};

/// Number of rfft bins for a real series of length `l`.
pub fn bin_count(l: usize) -> usize {
    l / 2 + 1
}

#[inline]
fn cis(theta: f64) -> Complex64 {
    Complex64::new(math::cos(theta), math::sin(theta))
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest prime length handled by the direct DFT; beyond this Bluestein wins.
const DIRECT_PRIME_MAX: usize = 64;

fn smallest_prime_factor(n: usize) -> usize {
    if n.is_multiple_of(2) {
        return 2;
    }
    let mut p = 3;
    while p * p <= n {
        if n.is_multiple_of(p) {
            return p;
        }
        p += 2;
    }
    n
}

/// Precomputed tables for one transform length. Building a plan is O(n);
/// reuse it across the batch and channel loops.
pub(crate) struct FftPlan {
    n: usize,
    /// `table[k] = exp(-2*pi*i*k/n)`.
    table: Vec<Complex64>,
    /// Chirp-z state for each prime factor above `DIRECT_PRIME_MAX`.
    bluestein: BTreeMap<usize, Bluestein>,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "transform length must be positive");
        let step = -math::TAU / n as f64;
        let table = (0..n).map(|k| cis(step * k as f64)).collect();
        let mut bluestein = BTreeMap::new();
        let mut rest = n;
        while rest > 1 {
            let p = smallest_prime_factor(rest);
            if p > DIRECT_PRIME_MAX && !bluestein.contains_key(&p) {
                bluestein.insert(p, Bluestein::new(p));
            }
            while rest.is_multiple_of(p) {
                rest /= p;
            }
        }
        FftPlan { n, table, bluestein }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place forward DFT of a full complex buffer of length `n`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.recurse(buf, 1);
    }

    /// In-place inverse DFT including the 1/n factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for z in buf.iter_mut() {
            *z = z.conj();
        }
        self.forward(buf);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z = z.conj() * scale;
        }
    }

    /// Twiddle for exponent `j*k` at table stride `stride`, i.e.
    /// `exp(-2*pi*i * jk * stride / n)`. Reduced modulo n early so the
    /// product stays far from overflow even on 32-bit targets.
    #[inline]
    fn tw(&self, jk: usize, stride: usize) -> Complex64 {
        let idx = (jk as u64 % self.n as u64) * stride as u64 % self.n as u64;
        self.table[idx as usize]
    }

    /// A sub-transform of length `buf.len()` at table stride `stride` sees
    /// `table[k*stride]` as its own k-th root of unity.
    fn recurse(&self, buf: &mut [Complex64], stride: usize) {
        let n = buf.len();
        if n == 1 {
            return;
        }
        let p = smallest_prime_factor(n);
        if p == n {
            if n <= DIRECT_PRIME_MAX {
                self.direct(buf, stride);
            } else {
                self.bluestein[&n].run(buf);
            }
            return;
        }

        // Decimate in time into p interleaved sub-series of length m.
        let m = n / p;
        let mut split = vec![ZERO; n];
        for r in 0..p {
            for j in 0..m {
                split[r * m + j] = buf[j * p + r];
            }
        }
        for r in 0..p {
            self.recurse(&mut split[r * m..(r + 1) * m], stride * p);
        }
        // Recombine: X[k] = sum_r W^(r*k) * S_r[k mod m].
        for (k, out) in buf.iter_mut().enumerate() {
            let s = k % m;
            let mut acc = split[s];
            for r in 1..p {
                acc += self.tw(r * k, stride) * split[r * m + s];
            }
            *out = acc;
        }
    }

    /// O(n^2) DFT for small prime lengths, sharing the root twiddle table.
    fn direct(&self, buf: &mut [Complex64], stride: usize) {
        let n = buf.len();
        let mut out = vec![ZERO; n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (j, &v) in buf.iter().enumerate() {
                acc += self.tw(j * k, stride) * v;
            }
            *slot = acc;
        }
        buf.copy_from_slice(&out);
    }
}

/// Bluestein's algorithm: a length-n DFT as a circular convolution on a
/// power-of-two grid of size m >= 2n-1.
struct Bluestein {
    n: usize,
    m: usize,
    /// `chirp[j] = exp(-pi*i*j^2/n)`.
    chirp: Vec<Complex64>,
    /// Forward pow2 FFT of the conjugate-chirp convolution kernel.
    kernel_fft: Vec<Complex64>,
    pow2: Pow2Fft,
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let two_n = 2 * n as u64;
        // j^2 mod 2n keeps the sin/cos argument small and exact.
        let chirp: Vec<Complex64> = (0..n)
            .map(|j| {
                let e = (j as u64 * j as u64) % two_n;
                cis(-math::PI * e as f64 / n as f64)
            })
            .collect();
        let pow2 = Pow2Fft::new(m);
        let mut kernel = vec![ZERO; m];
        kernel[0] = chirp[0].conj();
        for j in 1..n {
            let c = chirp[j].conj();
            kernel[j] = c;
            kernel[m - j] = c;
        }
        pow2.forward(&mut kernel);
        Bluestein {
            n,
            m,
            chirp,
            kernel_fft: kernel,
            pow2,
        }
    }

    fn run(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.n);
        let mut work = vec![ZERO; self.m];
        for j in 0..self.n {
            work[j] = buf[j] * self.chirp[j];
        }
        self.pow2.forward(&mut work);
        for (w, k) in work.iter_mut().zip(&self.kernel_fft) {
            *w *= k;
        }
        self.pow2.inverse(&mut work);
        for k in 0..self.n {
            buf[k] = work[k] * self.chirp[k];
        }
    }
}

/// Iterative radix-2 FFT for the Bluestein scratch grid.
struct Pow2Fft {
    n: usize,
    /// `table[k] = exp(-2*pi*i*k/n)` for k < n/2.
    table: Vec<Complex64>,
}

impl Pow2Fft {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let step = -math::TAU / n as f64;
        let table = (0..n / 2).map(|k| cis(step * k as f64)).collect();
        Pow2Fft { n, table }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        if n == 1 {
            return;
        }
        // Bit-reversal permutation.
        let shift = n.leading_zeros() + 1;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.table[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len *= 2;
        }
    }

    fn inverse(&self, buf: &mut [Complex64]) {
        for z in buf.iter_mut() {
            *z = z.conj();
        }
        self.forward(buf);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z = z.conj() * scale;
        }
    }
}

/// Half spectrum of a real series: `F = L/2 + 1` bins, unnormalized.
pub(crate) fn rfft_slice(plan: &FftPlan, x: &[f64], re: &mut [f64], im: &mut [f64]) {
    let l = x.len();
    let f = bin_count(l);
    debug_assert_eq!(plan.len(), l);
    debug_assert_eq!(re.len(), f);
    debug_assert_eq!(im.len(), f);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    for k in 0..f {
        re[k] = buf[k].re;
        im[k] = buf[k].im;
    }
}

/// Real reconstruction from a half spectrum via Hermitian extension.
pub(crate) fn irfft_slice(plan: &FftPlan, re: &[f64], im: &[f64], out: &mut [f64]) {
    let l = out.len();
    let f = bin_count(l);
    debug_assert_eq!(plan.len(), l);
    debug_assert_eq!(re.len(), f);
    debug_assert_eq!(im.len(), f);
    let mut buf = vec![ZERO; l];
    for (b, (&r, &i)) in buf.iter_mut().zip(re.iter().zip(im)) {
        *b = Complex64::new(r, i);
    }
    for (k, b) in buf.iter_mut().enumerate().skip(f) {
        let s = l - k;
        *b = Complex64::new(re[s], -im[s]);
    }
    plan.inverse(&mut buf);
    for (slot, z) in out.iter_mut().zip(&buf) {
        *slot = z.re;
    }
}

/// rfft of a rank-1 series. Any finite input of length >= 1 is valid.
pub fn rfft(x: &[f64]) -> ComplexTensor {
    assert!(!x.is_empty(), "rfft input must be non-empty");
    let plan = FftPlan::new(x.len());
    let f = bin_count(x.len());
    let mut re = vec![0.0; f];
    let mut im = vec![0.0; f];
    rfft_slice(&plan, x, &mut re, &mut im);
    ComplexTensor::new(vec![f], re, im).expect("bin planes agree by construction")
}

/// Inverse of [`rfft`] for a rank-1 half spectrum.
pub fn irfft(s: &ComplexTensor, l: usize) -> Result<Tensor> {
    if s.shape().len() != 1 {
        return dim_err("irfft expects a rank-1 spectrum");
    }
    if l == 0 || s.len() != bin_count(l) {
        return dim_err(alloc::format!(
            "spectrum of {} bins does not match series length {l} ({} bins expected)",
            s.len(),
            bin_count(l.max(1))
        ));
    }
    let plan = FftPlan::new(l);
    let mut out = vec![0.0; l];
    irfft_slice(&plan, s.re(), s.im(), &mut out);
    Tensor::new(vec![l], out)
}

/// Per-(batch, channel) rfft along the time axis: `[B, L, C] -> [B, F, C]`.
pub fn rfft_time(x: &Tensor) -> Result<ComplexTensor> {
    let &[b, l, c] = x.shape() else {
        return dim_err("rfft_time expects a [B, L, C] tensor");
    };
    if l == 0 || c == 0 || b == 0 {
        return dim_err("rfft_time expects non-degenerate dimensions");
    }
    let f = bin_count(l);
    let plan = FftPlan::new(l);
    let mut re = vec![0.0; b * f * c];
    let mut im = vec![0.0; b * f * c];
    let mut series = vec![0.0; l];
    let mut bre = vec![0.0; f];
    let mut bim = vec![0.0; f];
    let data = x.data();
    for bi in 0..b {
        for ci in 0..c {
            let base = bi * l * c + ci;
            for t in 0..l {
                series[t] = data[base + t * c];
            }
            rfft_slice(&plan, &series, &mut bre, &mut bim);
            let obase = bi * f * c + ci;
            for k in 0..f {
                re[obase + k * c] = bre[k];
                im[obase + k * c] = bim[k];
            }
        }
    }
    ComplexTensor::new(vec![b, f, c], re, im)
}

/// Per-(batch, channel) inverse along the time axis: `[B, F, C] -> [B, L, C]`.
pub fn irfft_time(s: &ComplexTensor, l: usize) -> Result<Tensor> {
    let &[b, f, c] = s.shape() else {
        return dim_err("irfft_time expects a [B, F, C] tensor");
    };
    if l == 0 || f != bin_count(l) {
        return dim_err(alloc::format!(
            "spectrum of {f} bins does not match series length {l}"
        ));
    }
    let plan = FftPlan::new(l);
    let mut out = vec![0.0; b * l * c];
    let mut bre = vec![0.0; f];
    let mut bim = vec![0.0; f];
    let mut series = vec![0.0; l];
    for bi in 0..b {
        for ci in 0..c {
            let base = bi * f * c + ci;
            for k in 0..f {
                bre[k] = s.re()[base + k * c];
                bim[k] = s.im()[base + k * c];
            }
            irfft_slice(&plan, &bre, &bim, &mut series);
            let obase = bi * l * c + ci;
            for t in 0..l {
                out[obase + t * c] = series[t];
            }
        }
    }
    Tensor::new(vec![b, l, c], out)
}
