//! Forward pass of windowed cross-attention with relative position terms.
//!
//! For every output location `o`, queries come from the source features and
//! keys/values from the target features over a dilated `k x k` neighborhood:
//! `y_o = sum_p softmax_p(q_o . k_p) (v_p + r_{o,p})`. Neighbors falling outside
//! the map are dropped from the softmax support.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataio::tensor::{Tensor, TensorBundle};
use crate::error::{Error, Result};

/// Channel-first feature tensor, `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} feature map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature map entries must be finite".into()));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Feature vector at one location.
    pub fn column(&self, y: usize, x: usize) -> DVector<f64> {
        DVector::from_iterator(self.channels, (0..self.channels).map(|c| self.at(c, y, x)))
    }

    fn project(&self, w: &DMatrix<f64>) -> Vec<DVector<f64>> {
        (0..self.height * self.width)
            .into_par_iter()
            .map(|i| w * self.column(i / self.width, i % self.width))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `C' x C` projections.
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
    /// Relative embedding, `rel[(i * field + j) * C' + c]` for window row `i`, column `j`.
    pub rel: Vec<f64>,
    /// Odd window side.
    pub field: usize,
    pub dilation: usize,
}

impl AttentionParams {
    /// Zero relative embedding.
    pub fn new(w_q: DMatrix<f64>, w_k: DMatrix<f64>, w_v: DMatrix<f64>, field: usize, dilation: usize) -> Result<Self> {
        let rel = vec![0.0; field * field * w_v.nrows()];
        let params = Self { w_q, w_k, w_v, rel, field, dilation };
        params.validate()?;
        Ok(params)
    }

    pub fn input_channels(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn output_channels(&self) -> usize {
        self.w_v.nrows()
    }

    pub fn rel_at(&self, i: usize, j: usize) -> &[f64] {
        let c = self.output_channels();
        let start = (i * self.field + j) * c;
        &self.rel[start..start + c]
    }

    pub fn validate(&self) -> Result<()> {
        if self.field.is_multiple_of(2) || self.field == 0 {
            return Err(Error::InvalidParameter(format!("attention field must be odd, got {}", self.field)));
        }
        if self.dilation == 0 {
            return Err(Error::InvalidParameter("dilation must be at least 1".into()));
        }
        let c = self.w_q.ncols();
        let c_out = self.w_v.nrows();
        if self.w_k.ncols() != c || self.w_v.ncols() != c || self.w_q.nrows() != self.w_k.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "projections W_q {}x{}, W_k {}x{}, W_v {}x{}",
                self.w_q.nrows(),
                self.w_q.ncols(),
                self.w_k.nrows(),
                self.w_k.ncols(),
                self.w_v.nrows(),
                self.w_v.ncols()
            )));
        }
        if self.rel.len() != self.field * self.field * c_out {
            return Err(Error::ShapeMismatch(format!(
                "relative table has {} values, expected {}x{}x{c_out}",
                self.rel.len(),
                self.field,
                self.field
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.w_q) || !finite(&self.w_k) || !finite(&self.w_v) || self.rel.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("attention parameters must be finite".into()));
        }
        Ok(())
    }
}

impl AttentionParams {
    /// Bundle tensors: `w_q`, `w_k`, `w_v` of shape `[C', C]`, `rel` of shape
    /// `[k, k, C']` and a scalar `dilation`.
    pub fn to_bundle(&self) -> TensorBundle {
        let matrix = |m: &DMatrix<f64>| {
            let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
            Tensor { shape: vec![m.nrows(), m.ncols()], data }
        };
        let mut b = TensorBundle::default();
        b.insert("w_q", matrix(&self.w_q));
        b.insert("w_k", matrix(&self.w_k));
        b.insert("w_v", matrix(&self.w_v));
        b.insert("rel", Tensor { shape: vec![self.field, self.field, self.output_channels()], data: self.rel.clone() });
        b.insert("dilation", Tensor::scalar(self.dilation as f64));
        b
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let matrix = |name: &str| -> Result<DMatrix<f64>> {
            let t = bundle.get(name)?;
            match t.shape.as_slice() {
                [r, c] => Ok(DMatrix::from_row_slice(*r, *c, &t.data)),
                s => Err(Error::ShapeMismatch(format!("{name} must be 2-D, got shape {s:?}"))),
            }
        };
        let rel = bundle.get("rel")?;
        let field = match rel.shape.as_slice() {
            [a, b, _] if a == b => *a,
            s => return Err(Error::ShapeMismatch(format!("rel must be [k, k, C'], got shape {s:?}"))),
        };
        let dilation = bundle.get("dilation")?.data.first().copied().unwrap_or(0.0);
        if dilation.fract() != 0.0 || dilation < 1.0 {
            return Err(Error::InvalidParameter(format!("dilation must be a positive integer, got {dilation}")));
        }
        let params = Self {
            w_q: matrix("w_q")?,
            w_k: matrix("w_k")?,
            w_v: matrix("w_v")?,
            rel: rel.data.clone(),
            field,
            dilation: dilation as usize,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Output features plus the softmax weights, `weights[(y * W + x) * k * k + i * k + j]`
/// (zero for neighbors outside the map).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: FeatureMap,
    pub weights: Vec<f64>,
}

impl AttentionOutput {
    pub fn weights_at(&self, y: usize, x: usize, field: usize) -> &[f64] {
        let n = field * field;
        let start = (y * self.output.width() + x) * n;
        &self.weights[start..start + n]
    }
}

pub fn cross_attention_forward(source: &FeatureMap, target: &FeatureMap, params: &AttentionParams) -> Result<FeatureMap> {
    Ok(cross_attention_detailed(source, target, params)?.output)
}

pub fn cross_attention_detailed(
    source: &FeatureMap,
    target: &FeatureMap,
    params: &AttentionParams,
) -> Result<AttentionOutput> {
    params.validate()?;
    if (source.channels, source.height, source.width) != (target.channels, target.height, target.width) {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{}x{} vs target {}x{}x{}",
            source.channels, source.height, source.width, target.channels, target.height, target.width
        )));
    }
    if source.channels != params.input_channels() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} channels, projections expect {}",
            source.channels,
            params.input_channels()
        )));
    }
    let (h, w) = (source.height, source.width);
    let k = params.field;
    let half = (k / 2) as isize;
    let dil = params.dilation as isize;
    let c_out = params.output_channels();

    let q = source.project(&params.w_q);
    let keys = target.project(&params.w_k);
    let values = target.project(&params.w_v);

    let per_pixel: Vec<(Vec<f64>, Vec<f64>)> = (0..h * w)
        .into_par_iter()
        .map(|o| {
            let (oy, ox) = ((o / w) as isize, (o % w) as isize);
            let mut logits = vec![f64::NEG_INFINITY; k * k];
            let mut peak = f64::NEG_INFINITY;
            for i in 0..k {
                for j in 0..k {
                    let py = oy + (i as isize - half) * dil;
                    let px = ox + (j as isize - half) * dil;
                    if py < 0 || px < 0 || py >= h as isize || px >= w as isize {
                        continue;
                    }
                    let l = q[o].dot(&keys[py as usize * w + px as usize]);
                    logits[i * k + j] = l;
                    peak = peak.max(l);
                }
            }
            let mut weights: Vec<f64> =
                logits.iter().map(|l| if l.is_finite() { (l - peak).exp() } else { 0.0 }).collect();
            let norm: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|v| *v /= norm);

            let mut y = vec![0.0; c_out];
            for i in 0..k {
                for j in 0..k {
                    let a = weights[i * k + j];
                    if a == 0.0 && !logits[i * k + j].is_finite() {
                        continue;
                    }
                    let py = (oy + (i as isize - half) * dil) as usize;
                    let px = (ox + (j as isize - half) * dil) as usize;
                    let v = &values[py * w + px];
                    let r = params.rel_at(i, j);
                    for c in 0..c_out {
                        y[c] += a * (v[c] + r[c]);
                    }
                }
            }
            (y, weights)
        })
        .collect();

    let mut output = FeatureMap::zeros(c_out, h, w);
    let mut weights = Vec::with_capacity(h * w * k * k);
    for (o, (y, wts)) in per_pixel.into_iter().enumerate() {
        for (c, v) in y.into_iter().enumerate() {
            output.set(c, o / w, o % w, v);
        }
        weights.extend(wts);
    }
    Ok(AttentionOutput { output, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::new(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng, c: usize, c_out: usize, field: usize, dilation: usize) -> AttentionParams {
        let mut m = |r, c| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let (w_q, w_k, w_v) = (m(c_out, c), m(c_out, c), m(c_out, c));
        let mut p = AttentionParams::new(w_q, w_k, w_v, field, dilation).unwrap();
        p.rel.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        p
    }

    #[test]
    fn singleton_field_is_value_plus_center_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (fs, ft) = (random_map(&mut rng, 3, 5, 6), random_map(&mut rng, 3, 5, 6));
        let p = random_params(&mut rng, 3, 2, 1, 1);
        let y = cross_attention_forward(&fs, &ft, &p).unwrap();
        for yy in 0..5 {
            for xx in 0..6 {
                let v = &p.w_v * ft.column(yy, xx);
                for c in 0..2 {
                    assert_eq!(y.at(c, yy, xx), v[c] + p.rel[c]);
                }
            }
        }
    }

    #[test]
    fn constant_values_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fs = random_map(&mut rng, 2, 7, 7);
        // target: a constant channel plus a varying one; W_v reads only the constant one
        let ft = FeatureMap::from_fn(2, 7, 7, |c, y, x| if c == 0 { 1.0 } else { (x * y) as f64 * 0.1 }).unwrap();
        let mut p = random_params(&mut rng, 2, 2, 5, 2);
        p.w_v = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, -0.3, 0.0]);
        p.rel.iter_mut().for_each(|v| *v = 0.0);
        let y = cross_attention_forward(&fs, &ft, &p).unwrap();
        for yy in 0..7 {
            for xx in 0..7 {
                assert!((y.at(0, yy, xx) - 0.7).abs() < 1e-12);
                assert!((y.at(1, yy, xx) + 0.3).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_are_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (fs, ft) = (random_map(&mut rng, 4, 9, 8), random_map(&mut rng, 4, 9, 8));
        let p = random_params(&mut rng, 4, 3, 5, 2);
        let out = cross_attention_detailed(&fs, &ft, &p).unwrap();
        for y in 0..9 {
            for x in 0..8 {
                let wts = out.weights_at(y, x, 5);
                assert!(wts.iter().all(|v| *v >= 0.0));
                assert!((wts.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
        // corner pixel: out-of-bounds neighbors carry no weight
        let corner = out.weights_at(0, 0, 5);
        assert_eq!(corner[0], 0.0);
        assert!(corner[2 * 5 + 2] > 0.0);
    }

    #[test]
    fn locality_of_nineteen_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, w) = (48, 48);
        let fs = random_map(&mut rng, 2, h, w);
        let ft = random_map(&mut rng, 2, h, w);
        let p = random_params(&mut rng, 2, 2, 19, 2);
        let base = cross_attention_forward(&fs, &ft, &p).unwrap();
        let (oy, ox) = (24usize, 24usize);
        let reach = 9 * 2;
        for (py, px) in [(24 + reach + 1, 24), (24, 24 - reach - 1), (24 + 1, 24 + 1), (2, 2), (24 + 3, 24 + 2), (24 + reach, 24 - reach), (28, 18), (24, 24)] {
            let mut perturbed = ft.clone();
            perturbed.set(0, py, px, ft.at(0, py, px) + 5.0);
            let y = cross_attention_forward(&fs, &perturbed, &p).unwrap();
            let on_grid = (py as isize - oy as isize) % 2 == 0 && (px as isize - ox as isize) % 2 == 0;
            let inside = py.abs_diff(oy) <= reach && px.abs_diff(ox) <= reach && on_grid;
            let same = (0..2).all(|c| y.at(c, oy, ox).to_bits() == base.at(c, oy, ox).to_bits());
            assert_eq!(same, !inside, "perturbation at ({py}, {px})");
        }
    }

    #[test]
    fn bundle_round_trip_gives_identical_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(&mut rng, 3, 2, 5, 2);
        let bytes = p.to_bundle().encode();
        let q = AttentionParams::from_bundle(&TensorBundle::decode(&bytes).unwrap()).unwrap();
        assert_eq!(p, q);
        let (a, b) = (random_map(&mut rng, 3, 6, 6), random_map(&mut rng, 3, 6, 6));
        assert_eq!(cross_attention_forward(&a, &b, &p).unwrap(), cross_attention_forward(&a, &b, &q).unwrap());
        let mut broken = p.to_bundle();
        broken.insert("rel", Tensor::new(vec![4, 4, 2], vec![0.0; 32]).unwrap());
        assert!(AttentionParams::from_bundle(&broken).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&mut rng, 3, 2, 3, 1);
        let a = random_map(&mut rng, 3, 4, 4);
        let b = random_map(&mut rng, 3, 4, 5);
        assert!(matches!(cross_attention_forward(&a, &b, &p), Err(Error::ShapeMismatch(_))));
        let c = random_map(&mut rng, 2, 4, 4);
        assert!(matches!(cross_attention_forward(&c, &c, &p), Err(Error::ShapeMismatch(_))));
        let mut even = p.clone();
        even.field = 4;
        assert!(even.validate().is_err());
    }

    proptest! {
        #[test]
        fn logit_shift_invariance(seed in 0u64..200, shift in -20.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (6, 7);
            // channel 2 is constant 1 in both maps; an extra projection row pairs it
            // so every logit gains exactly `shift`
            let mut fs = random_map(&mut rng, 3, h, w);
            let mut ft = random_map(&mut rng, 3, h, w);
            for y in 0..h {
                for x in 0..w {
                    fs.set(2, y, x, 1.0);
                    ft.set(2, y, x, 1.0);
                }
            }
            let mut p = random_params(&mut rng, 3, 2, 3, 1);
            for r in 0..2 {
                p.w_q[(r, 2)] = 0.0;
                p.w_k[(r, 2)] = 0.0;
            }
            let base = cross_attention_forward(&fs, &ft, &p).unwrap();
            let mut shifted = p.clone();
            shifted.w_q = p.w_q.clone().insert_row(2, 0.0);
            shifted.w_k = p.w_k.clone().insert_row(2, 0.0);
            shifted.w_q[(2, 2)] = 1.0;
            shifted.w_k[(2, 2)] = shift;
            let y = cross_attention_forward(&fs, &ft, &shifted).unwrap();
            for (a, b) in base.data().iter().zip(y.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn translation_equivariance(seed in 0u64..100, dy in 0usize..3, dx in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (14, 15);
            let big_s = random_map(&mut rng, 2, h + 3, w + 3);
            let big_t = random_map(&mut rng, 2, h + 3, w + 3);
            let crop = |m: &FeatureMap, oy: usize, ox: usize| {
                FeatureMap::from_fn(2, h, w, |c, y, x| m.at(c, y + oy, x + ox)).unwrap()
            };
            let p = random_params(&mut rng, 2, 2, 3, 2);
            let a = cross_attention_forward(&crop(&big_s, 0, 0), &crop(&big_t, 0, 0), &p).unwrap();
            let b = cross_attention_forward(&crop(&big_s, dy, dx), &crop(&big_t, dy, dx), &p).unwrap();
            // interior: the full dilated window stays inside both crops
            let margin = 2;
            for y in (margin + dy)..(h - margin) {
                for x in (margin + dx)..(w - margin) {
                    for c in 0..2 {
                        prop_assert!((a.at(c, y, x) - b.at(c, y - dy, x - dx)).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
