//! The five obfuscation methods and the glint-preserving pipeline.
//!
//! Every method operates on the iris patch (bounding box of iris-class
//! pixels), is composited back under the iris mask with the original glint
//! pixels restored exactly, and leaves all non-iris pixels bit-identical.
//! Rubber-sheet swapping works through the polar (Daugman) mapping; style
//! transfer optimizes patch pixels by gradient descent through a small
//! fixed-weight convolutional feature extractor, with reverse-mode
//! differentiation written out by hand.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::imagecore::{
    add_gaussian_noise, composite, convolve2d, gaussian_kernel, resample, upsample_to, BinaryMask,
    EyeImage, ResampleMethod, RngSeed,
};
use crate::segmentation::{fit_annulus, EyeClass, IrisAnnulus};
use crate::synthgen::{Dataset, EyeSample};
use crate::{Error, Result};

/// Polar strip resolution: radial rows x angular columns.
pub const STRIP_RADIAL: usize = 64;
pub const STRIP_ANGULAR: usize = 256;

/// Iris texture unwrapped to normalized polar coordinates: row r is
/// normalized radius r/(R-1) from pupil boundary (0) to iris boundary (1),
/// column c is angle 2*pi*c/Theta.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarStrip {
    radial: usize,
    angular: usize,
    data: Vec<f64>,
}

impl PolarStrip {
    pub fn new(radial: usize, angular: usize, data: Vec<f64>) -> Result<PolarStrip> {
        if radial == 0 || angular == 0 || data.len() != radial * angular {
            return Err(Error::InvalidParameter(format!(
                "strip data length {} does not match {}x{}",
                data.len(),
                radial,
                angular
            )));
        }
        Ok(PolarStrip {
            radial,
            angular,
            data,
        })
    }

    pub fn radial(&self) -> usize {
        self.radial
    }

    pub fn angular(&self) -> usize {
        self.angular
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.angular + c]
    }

    /// Bilinear sample at normalized radius `t` in [0,1] (clamped) and angle
    /// `theta` in radians (wrapping).
    pub fn sample(&self, t: f64, theta: f64) -> f64 {
        let rf = (t.clamp(0.0, 1.0)) * (self.radial - 1) as f64;
        let r0 = rf.floor() as usize;
        let r1 = (r0 + 1).min(self.radial - 1);
        let tr = rf - r0 as f64;
        let cf = theta.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
            * self.angular as f64;
        let c0 = (cf.floor() as usize) % self.angular;
        let c1 = (c0 + 1) % self.angular;
        let tc = cf - cf.floor();
        let v0 = self.get(r0, c0) * (1.0 - tc) + self.get(r0, c1) * tc;
        let v1 = self.get(r1, c0) * (1.0 - tc) + self.get(r1, c1) * tc;
        v0 * (1.0 - tr) + v1 * tr
    }
}

fn annulus_in_bounds(annulus: &IrisAnnulus, width: usize, height: usize) -> bool {
    let (cx, cy) = annulus.iris_center;
    let r = annulus.iris_radius;
    cx - r >= 0.0 && cy - r >= 0.0 && cx + r <= (width - 1) as f64 && cy + r <= (height - 1) as f64
}

/// Daugman rubber-sheet unwrap: samples the image along per-angle segments
/// from the pupil boundary to the iris boundary (handles non-concentric
/// circles).
pub fn unwrap(
    image: &EyeImage,
    annulus: &IrisAnnulus,
    radial: usize,
    angular: usize,
) -> Result<PolarStrip> {
    if radial < 2 || angular < 2 {
        return Err(Error::InvalidParameter(format!(
            "strip resolution {radial}x{angular} too small"
        )));
    }
    if !annulus_in_bounds(annulus, image.width(), image.height()) {
        return Err(Error::InvalidParameter(
            "annulus extends outside the image".into(),
        ));
    }
    let mut data = Vec::with_capacity(radial * angular);
    for r in 0..radial {
        let t = r as f64 / (radial - 1) as f64;
        for c in 0..angular {
            let theta = 2.0 * std::f64::consts::PI * c as f64 / angular as f64;
            let (x, y) = annulus.point_at(t, theta);
            data.push(image.sample_bilinear(x, y));
        }
    }
    PolarStrip::new(radial, angular, data)
}

/// Inverse of the rubber-sheet mapping for one pixel: returns (t, theta)
/// such that the point lies on the boundary-interpolation segment at angle
/// theta with parameter t. Exact in one pass for concentric circles; a few
/// fixed-point iterations absorb small eccentricity.
fn polar_coords(annulus: &IrisAnnulus, x: f64, y: f64) -> (f64, f64) {
    let mut theta = (y - annulus.pupil_center.1).atan2(x - annulus.pupil_center.0);
    let mut t = 0.5;
    for _ in 0..3 {
        let (px, py) = annulus.pupil_point(theta);
        let (ix, iy) = annulus.iris_point(theta);
        let ex = ix - px;
        let ey = iy - py;
        let len2 = ex * ex + ey * ey;
        t = ((x - px) * ex + (y - py) * ey) / len2.max(1e-12);
        let tc = t.clamp(0.0, 1.0);
        let cx = (1.0 - tc) * annulus.pupil_center.0 + tc * annulus.iris_center.0;
        let cy = (1.0 - tc) * annulus.pupil_center.1 + tc * annulus.iris_center.1;
        theta = (y - cy).atan2(x - cx);
    }
    (t, theta)
}

/// Inverse rubber-sheet wrap: every target pixel inside the annulus receives
/// a bilinear strip sample at its (normalized radius, angle); everything
/// else is copied unchanged.
pub fn wrap(strip: &PolarStrip, annulus: &IrisAnnulus, target: &EyeImage) -> Result<EyeImage> {
    if !annulus_in_bounds(annulus, target.width(), target.height()) {
        return Err(Error::InvalidParameter(
            "annulus extends outside the image".into(),
        ));
    }
    let mut out = target.clone();
    let (cx, cy) = annulus.iris_center;
    let r = annulus.iris_radius;
    let x0 = (cx - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(target.width() - 1);
    let y0 = (cy - r).floor().max(0.0) as usize;
    let y1 = ((cy + r).ceil() as usize).min(target.height() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (t, theta) = polar_coords(annulus, x as f64, y as f64);
            if (0.0..=1.0).contains(&t) {
                out.set(x, y, strip.sample(t, theta));
            }
        }
    }
    Ok(out)
}

/// Unwraps a donor's iris texture with its specular glints removed:
/// strip cells sampled on or next to glint pixels are refilled by circular
/// linear interpolation along their row. Glints belong to the capture, not
/// the iris, so a texture transplant must not carry them over.
fn unwrap_donor_texture(
    donor: &EyeSample,
    annulus: &IrisAnnulus,
    radial: usize,
    angular: usize,
) -> Result<PolarStrip> {
    let strip = unwrap(&donor.image, annulus, radial, angular)?;
    let contaminated_region = crate::segmentation::dilate(&donor.glints, 2);
    let mut data = strip.data().to_vec();
    for r in 0..radial {
        let t = r as f64 / (radial - 1) as f64;
        let row_bad: Vec<bool> = (0..angular)
            .map(|c| {
                let theta = 2.0 * std::f64::consts::PI * c as f64 / angular as f64;
                let (x, y) = annulus.point_at(t, theta);
                let xi = x.round() as isize;
                let yi = y.round() as isize;
                xi >= 0
                    && yi >= 0
                    && (xi as usize) < contaminated_region.width
                    && (yi as usize) < contaminated_region.height
                    && contaminated_region.get(xi as usize, yi as usize)
            })
            .collect();
        // Scan circularly from a clean cell so every gap has clean
        // neighbors on both sides (gaps may straddle the angular seam).
        let Some(start) = row_bad.iter().position(|&b| !b) else {
            continue; // cannot happen for blob-sized glints; keep raw row
        };
        let mut i = 0;
        while i < angular {
            if !row_bad[(start + i) % angular] {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < angular && row_bad[(start + j) % angular] {
                j += 1;
            }
            let before = (start + i + angular - 1) % angular;
            let after = (start + j) % angular;
            let v0 = data[r * angular + before];
            let v1 = data[r * angular + after];
            let len = (j - i + 1) as f64;
            for k in 0..(j - i) {
                let cc = (start + i + k) % angular;
                let w = (k + 1) as f64 / len;
                data[r * angular + cc] = v0 * (1.0 - w) + v1 * w;
            }
            i = j;
        }
    }
    PolarStrip::new(radial, angular, data)
}

/// Transplants the donor's iris texture into the victim's eye: donor iris
/// unwrapped on the donor annulus (donor glints inpainted), wrapped onto
/// the victim annulus. Both annuli are fit from the masks. Restoring the
/// victim's glints is the pipeline's job.
pub fn swap_iris(victim: &EyeSample, donor: &EyeSample) -> Result<EyeImage> {
    let victim_annulus = fit_annulus(&victim.mask)?;
    let donor_annulus = fit_annulus(&donor.mask)?;
    let strip = unwrap_donor_texture(donor, &donor_annulus, STRIP_RADIAL, STRIP_ANGULAR)?;
    let mut out = wrap(&strip, &victim_annulus, &victim.image)?;
    feather_inner_rim(&mut out, &victim.image, &victim_annulus);
    Ok(out)
}

/// Width in pixels of the pupil-side blend band of a transplant.
const SWAP_FEATHER_PX: f64 = 2.0;

/// Restores the victim's own pupil-boundary transition after a wrap: the
/// donor strip's innermost samples carry the donor's boundary blur, and
/// grafting that foreign ring onto the victim's pupil edge perturbs any
/// intensity-threshold pupil estimate downstream. Texture deeper in the
/// annulus is untouched.
fn feather_inner_rim(out: &mut EyeImage, victim: &EyeImage, annulus: &IrisAnnulus) {
    let (cx, cy) = annulus.iris_center;
    let r = annulus.iris_radius;
    let x0 = (cx - r).floor().max(0.0) as usize;
    let x1 = ((cx + r).ceil() as usize).min(out.width() - 1);
    let y0 = (cy - r).floor().max(0.0) as usize;
    let y1 = ((cy + r).ceil() as usize).min(out.height() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (t, theta) = polar_coords(annulus, x as f64, y as f64);
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            let (px, py) = annulus.pupil_point(theta);
            let (ix, iy) = annulus.iris_point(theta);
            let width = ((ix - px).powi(2) + (iy - py).powi(2)).sqrt();
            let keep = 1.0 - (t * width / SWAP_FEATHER_PX).min(1.0);
            if keep > 0.0 {
                let blend = keep * victim.get(x, y) + (1.0 - keep) * out.get(x, y);
                out.set(x, y, blend);
            }
        }
    }
}

/// Channel-major feature map stack.
#[derive(Debug, Clone, PartialEq)]
struct Tensor {
    ch: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    fn zeros(ch: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            ch,
            h,
            w,
            data: vec![0.0; ch * h * w],
        }
    }

    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }
}

/// One stage: 3x3 convolution (zero padding, stride 1, no bias) + rectifier
/// + 2x2 average pooling (stride 2, floor).
#[derive(Debug, Clone)]
struct ConvStage {
    in_ch: usize,
    out_ch: usize,
    /// weights[((co * in_ch) + ci) * 9 + (u * 3 + v)]
    weights: Vec<f64>,
}

impl ConvStage {
    fn seeded(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> ConvStage {
        let fan_in = (in_ch * 9) as f64;
        let normal = Normal::new(0.0, 1.0 / fan_in.sqrt()).expect("positive std");
        let weights = (0..out_ch * in_ch * 9)
            .map(|_| normal.sample(rng))
            .collect();
        ConvStage {
            in_ch,
            out_ch,
            weights,
        }
    }

    /// Pre-activation maps (needed for the backward rectifier mask).
    fn conv(&self, input: &Tensor) -> Tensor {
        debug_assert_eq!(input.ch, self.in_ch);
        let (h, w) = (input.h, input.w);
        let mut out = Tensor::zeros(self.out_ch, h, w);
        for co in 0..self.out_ch {
            for ci in 0..self.in_ch {
                let k = &self.weights[(co * self.in_ch + ci) * 9..(co * self.in_ch + ci) * 9 + 9];
                let plane = input.plane(ci);
                let dst = &mut out.data[(co * h) * w..(co * h + h) * w];
                for u in 0..3usize {
                    for v in 0..3usize {
                        let kw = k[u * 3 + v];
                        if kw == 0.0 {
                            continue;
                        }
                        let dy = u as isize - 1;
                        let dx = v as isize - 1;
                        let ys = (-dy).max(0) as usize;
                        let ye = (h as isize - dy).min(h as isize) as usize;
                        let xs = (-dx).max(0) as usize;
                        let xe = (w as isize - dx).min(w as isize) as usize;
                        for y in ys..ye {
                            let sy = (y as isize + dy) as usize;
                            for x in xs..xe {
                                let sx = (x as isize + dx) as usize;
                                dst[y * w + x] += kw * plane[sy * w + sx];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Gradient w.r.t. the convolution input given the gradient w.r.t. the
    /// pre-activation output (correlation with flipped kernels).
    fn conv_input_grad(&self, gout: &Tensor) -> Tensor {
        let (h, w) = (gout.h, gout.w);
        let mut gin = Tensor::zeros(self.in_ch, h, w);
        for co in 0..self.out_ch {
            let gplane = gout.plane(co);
            for ci in 0..self.in_ch {
                let k = &self.weights[(co * self.in_ch + ci) * 9..(co * self.in_ch + ci) * 9 + 9];
                let dst = &mut gin.data[(ci * h) * w..(ci * h + h) * w];
                for u in 0..3usize {
                    for v in 0..3usize {
                        let kw = k[u * 3 + v];
                        if kw == 0.0 {
                            continue;
                        }
                        // forward: out[y][x] += in[y+u-1][x+v-1] * kw
                        // backward: gin[y][x] += gout[y-u+1][x-v+1] * kw
                        let dy = 1 - u as isize;
                        let dx = 1 - v as isize;
                        let ys = (-dy).max(0) as usize;
                        let ye = (h as isize - dy).min(h as isize) as usize;
                        let xs = (-dx).max(0) as usize;
                        let xe = (w as isize - dx).min(w as isize) as usize;
                        for y in ys..ye {
                            let sy = (y as isize + dy) as usize;
                            for x in xs..xe {
                                let sx = (x as isize + dx) as usize;
                                dst[y * w + x] += kw * gplane[sy * w + sx];
                            }
                        }
                    }
                }
            }
        }
        gin
    }
}

fn relu(t: &Tensor) -> Tensor {
    Tensor {
        ch: t.ch,
        h: t.h,
        w: t.w,
        data: t.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

fn avg_pool(t: &Tensor) -> Tensor {
    let oh = t.h / 2;
    let ow = t.w / 2;
    let mut out = Tensor::zeros(t.ch, oh, ow);
    for c in 0..t.ch {
        for y in 0..oh {
            for x in 0..ow {
                let s = t.at(c, 2 * y, 2 * x)
                    + t.at(c, 2 * y, 2 * x + 1)
                    + t.at(c, 2 * y + 1, 2 * x)
                    + t.at(c, 2 * y + 1, 2 * x + 1);
                out.data[(c * oh + y) * ow + x] = s / 4.0;
            }
        }
    }
    out
}

/// Backward of avg_pool: spreads each output gradient over its 2x2 window;
/// rows/columns dropped by the floor division receive zero.
fn avg_pool_backward(gout: &Tensor, in_h: usize, in_w: usize) -> Tensor {
    let mut gin = Tensor::zeros(gout.ch, in_h, in_w);
    for c in 0..gout.ch {
        for y in 0..gout.h {
            for x in 0..gout.w {
                let g = gout.at(c, y, x) / 4.0;
                for (yy, xx) in [
                    (2 * y, 2 * x),
                    (2 * y, 2 * x + 1),
                    (2 * y + 1, 2 * x),
                    (2 * y + 1, 2 * x + 1),
                ] {
                    gin.data[(c * in_h + yy) * in_w + xx] = g;
                }
            }
        }
    }
    gin
}

/// Three-stage fixed-weight convolutional feature extractor, channel widths
/// (16, 32, 64). Weights are drawn once from the seed (normal, scaled by
/// 1/sqrt(fan-in), zero bias) and never change.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stages: Vec<ConvStage>,
}

/// Channel widths per stage.
pub const EXTRACTOR_CHANNELS: [usize; 3] = [16, 32, 64];
/// Style vector length: means and stds for every channel of every stage.
pub const STYLE_DIM: usize = 2 * (16 + 32 + 64);
/// Stage whose feature maps define the content objective (0-based).
const CONTENT_STAGE: usize = 1;
/// Variance floor inside the std computation, for gradient stability.
const VAR_EPS: f64 = 1e-12;

/// Minimum patch side for the extractor (three 2x down-poolings need room).
pub const MIN_PATCH_SIDE: usize = 16;

impl FeatureExtractor {
    pub fn new(seed: RngSeed) -> FeatureExtractor {
        let mut rng = seed.rng();
        let mut stages = Vec::new();
        let mut in_ch = 1;
        for &out_ch in &EXTRACTOR_CHANNELS {
            stages.push(ConvStage::seeded(in_ch, out_ch, &mut rng));
            in_ch = out_ch;
        }
        FeatureExtractor { stages }
    }

    fn input_tensor(patch: &EyeImage) -> Tensor {
        Tensor {
            ch: 1,
            h: patch.height(),
            w: patch.width(),
            data: patch.data().to_vec(),
        }
    }

    /// Runs all stages, returning (pre-activation, pooled output) per stage.
    fn forward(&self, patch: &EyeImage) -> Vec<(Tensor, Tensor)> {
        let mut states = Vec::with_capacity(self.stages.len());
        let mut cur = Self::input_tensor(patch);
        for stage in &self.stages {
            let pre = stage.conv(&cur);
            let post = avg_pool(&relu(&pre));
            states.push((pre, post));
            cur = states.last().unwrap().1.clone();
        }
        states
    }
}

/// Per-channel spatial mean and standard deviation of a feature map stack.
fn channel_stats(t: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let n = (t.h * t.w) as f64;
    let mut means = Vec::with_capacity(t.ch);
    let mut stds = Vec::with_capacity(t.ch);
    for c in 0..t.ch {
        let plane = t.plane(c);
        let mean = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push((var + VAR_EPS).sqrt());
    }
    (means, stds)
}

/// Style statistics: for each stage, per-channel means then stds of the
/// extractor's pooled activation maps, concatenated (length 224).
pub fn style_features(extractor: &FeatureExtractor, patch: &EyeImage) -> Result<Vec<f64>> {
    if patch.width() < MIN_PATCH_SIDE || patch.height() < MIN_PATCH_SIDE {
        return Err(Error::InvalidParameter(format!(
            "patch {}x{} below minimum {}x{}",
            patch.width(),
            patch.height(),
            MIN_PATCH_SIDE,
            MIN_PATCH_SIDE
        )));
    }
    let states = extractor.forward(patch);
    let mut out = Vec::with_capacity(STYLE_DIM);
    for (_, post) in &states {
        let (means, stds) = channel_stats(post);
        out.extend(means);
        out.extend(stds);
    }
    Ok(out)
}

/// Optimization targets captured once before the descent loop.
struct TransferTargets {
    content: Tensor,
    style_means: Vec<Vec<f64>>,
    style_stds: Vec<Vec<f64>>,
}

fn transfer_targets(extractor: &FeatureExtractor, victim: &EyeImage, donor: &EyeImage) -> TransferTargets {
    let victim_states = extractor.forward(victim);
    let donor_states = extractor.forward(donor);
    let mut style_means = Vec::new();
    let mut style_stds = Vec::new();
    for (_, post) in &donor_states {
        let (m, s) = channel_stats(post);
        style_means.push(m);
        style_stds.push(s);
    }
    TransferTargets {
        content: victim_states[CONTENT_STAGE].1.clone(),
        style_means,
        style_stds,
    }
}

/// Loss and pixel gradient for the current working patch.
fn transfer_loss_grad(
    extractor: &FeatureExtractor,
    x: &EyeImage,
    targets: &TransferTargets,
    content_weight: f64,
    style_weight: f64,
) -> (f64, Vec<f64>) {
    let states = extractor.forward(x);
    let mut loss = 0.0;

    // Per-stage gradients w.r.t. pooled outputs.
    let mut out_grads: Vec<Tensor> = states
        .iter()
        .map(|(_, post)| Tensor::zeros(post.ch, post.h, post.w))
        .collect();

    // Content term: MSE over the content stage's feature maps.
    {
        let post = &states[CONTENT_STAGE].1;
        let target = &targets.content;
        let n = post.data.len() as f64;
        let g = &mut out_grads[CONTENT_STAGE];
        let mut acc = 0.0;
        for i in 0..post.data.len() {
            let d = post.data[i] - target.data[i];
            acc += d * d;
            g.data[i] += content_weight * 2.0 * d / n;
        }
        loss += content_weight * acc / n;
    }

    // Style term: (1/C_l) sum over channels of squared mean/std mismatch.
    for (l, (_, post)) in states.iter().enumerate() {
        let (means, stds) = channel_stats(post);
        let cl = post.ch as f64;
        let n = (post.h * post.w) as f64;
        let g = &mut out_grads[l];
        for c in 0..post.ch {
            let dm = means[c] - targets.style_means[l][c];
            let ds = stds[c] - targets.style_stds[l][c];
            loss += style_weight * (dm * dm + ds * ds) / cl;
            let dl_dmean = style_weight * 2.0 * dm / cl;
            let dl_dstd = style_weight * 2.0 * ds / cl;
            let plane_off = c * post.h * post.w;
            for i in 0..post.h * post.w {
                let a = post.data[plane_off + i];
                // d std / d a_i = (a_i - mean) / (n * std)
                g.data[plane_off + i] +=
                    dl_dmean / n + dl_dstd * (a - means[c]) / (n * stds[c]);
            }
        }
    }

    // Reverse through the stages.
    let mut grad: Option<Tensor> = None;
    for l in (0..extractor.stages.len()).rev() {
        let (pre, post) = &states[l];
        let mut gpost = out_grads[l].clone();
        if let Some(upper) = grad {
            for i in 0..gpost.data.len() {
                gpost.data[i] += upper.data[i];
            }
        }
        let mut gpre = avg_pool_backward(&gpost, pre.h, pre.w);
        debug_assert_eq!(post.h, pre.h / 2);
        for i in 0..gpre.data.len() {
            if pre.data[i] <= 0.0 {
                gpre.data[i] = 0.0;
            }
        }
        grad = Some(extractor.stages[l].conv_input_grad(&gpre));
    }
    (loss, grad.expect("at least one stage").data)
}

/// Iterative style transfer onto a copy of `victim_patch`, returning the
/// result and the per-iteration loss trace (loss measured before each step).
///
/// The descent rate is `step_size` in intensity units: the raw-gradient
/// learning rate is calibrated once so the first step's largest pixel move
/// equals `step_size`, then held constant (halved at most once if a step
/// ever increases the loss). Runs exactly `iterations` steps.
pub fn style_transfer_trace(
    extractor: &FeatureExtractor,
    victim_patch: &EyeImage,
    donor_patch: &EyeImage,
    iterations: usize,
    content_weight: f64,
    style_weight: f64,
    step_size: f64,
) -> Result<(EyeImage, Vec<f64>)> {
    if victim_patch.width() != donor_patch.width() || victim_patch.height() != donor_patch.height()
    {
        return Err(Error::InvalidParameter(format!(
            "victim patch {}x{} and donor patch {}x{} differ",
            victim_patch.width(),
            victim_patch.height(),
            donor_patch.width(),
            donor_patch.height()
        )));
    }
    if victim_patch.width() < MIN_PATCH_SIDE || victim_patch.height() < MIN_PATCH_SIDE {
        return Err(Error::InvalidParameter(format!(
            "patch {}x{} below minimum {}x{}",
            victim_patch.width(),
            victim_patch.height(),
            MIN_PATCH_SIDE,
            MIN_PATCH_SIDE
        )));
    }
    if iterations < 1 {
        return Err(Error::InvalidParameter(
            "style transfer needs at least 1 iteration".into(),
        ));
    }
    if !(step_size > 0.0) || content_weight < 0.0 || style_weight < 0.0 {
        return Err(Error::InvalidParameter(
            "step size must be positive and weights nonnegative".into(),
        ));
    }
    let targets = transfer_targets(extractor, victim_patch, donor_patch);
    let mut x = victim_patch.clone();
    let mut trace = Vec::with_capacity(iterations + 1);
    let mut rate: Option<f64> = None;
    let mut halved = false;
    let mut prev_loss = f64::INFINITY;
    for _ in 0..iterations {
        let (loss, grad) = transfer_loss_grad(extractor, &x, &targets, content_weight, style_weight);
        if loss > prev_loss && !halved {
            rate = rate.map(|r| r * 0.5);
            halved = true;
        }
        trace.push(loss);
        prev_loss = loss;
        let gmax = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
        if gmax <= 1e-15 {
            // Already at a stationary point (e.g. donor == victim).
            continue;
        }
        let r = *rate.get_or_insert(step_size / gmax);
        let mut data = x.data().to_vec();
        for (v, g) in data.iter_mut().zip(&grad) {
            *v = (*v - r * g).clamp(0.0, 1.0);
        }
        x = EyeImage::from_data(x.width(), x.height(), data)?;
    }
    Ok((x, trace))
}

/// `style_transfer_trace` without the trace.
pub fn style_transfer(
    extractor: &FeatureExtractor,
    victim_patch: &EyeImage,
    donor_patch: &EyeImage,
    iterations: usize,
    content_weight: f64,
    style_weight: f64,
    step_size: f64,
) -> Result<EyeImage> {
    style_transfer_trace(
        extractor,
        victim_patch,
        donor_patch,
        iterations,
        content_weight,
        style_weight,
        step_size,
    )
    .map(|(img, _)| img)
}

/// Default style-transfer hyperparameters (weights fix only their ratio;
/// the step is in intensity units).
pub const DEFAULT_CONTENT_WEIGHT: f64 = 1.0;
pub const DEFAULT_STYLE_WEIGHT: f64 = 1.0;
pub const DEFAULT_STEP_SIZE: f64 = 0.05;

/// One of the five obfuscation methods, with its parameters.
#[derive(Debug, Clone)]
pub enum ObfuscationMethod {
    Blur {
        sigma: f64,
    },
    Noise {
        sigma: f64,
        seed: RngSeed,
    },
    Downsample {
        scale: f64,
    },
    RubberSheet {
        donor: EyeSample,
    },
    StyleTransfer {
        donor: EyeSample,
        iterations: usize,
        content_weight: f64,
        style_weight: f64,
        step_size: f64,
        extractor_seed: RngSeed,
    },
}

impl ObfuscationMethod {
    /// Style transfer with default weights and step.
    pub fn style_transfer_default(
        donor: EyeSample,
        iterations: usize,
        extractor_seed: RngSeed,
    ) -> ObfuscationMethod {
        ObfuscationMethod::StyleTransfer {
            donor,
            iterations,
            content_weight: DEFAULT_CONTENT_WEIGHT,
            style_weight: DEFAULT_STYLE_WEIGHT,
            step_size: DEFAULT_STEP_SIZE,
            extractor_seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObfuscationMethod::Blur { .. } => "blur",
            ObfuscationMethod::Noise { .. } => "noise",
            ObfuscationMethod::Downsample { .. } => "downsample",
            ObfuscationMethod::RubberSheet { .. } => "rubber_sheet",
            ObfuscationMethod::StyleTransfer { .. } => "style_transfer",
        }
    }

    /// Human-readable parameter tag for reports.
    pub fn param_label(&self) -> String {
        match self {
            ObfuscationMethod::Blur { sigma } => format!("sigma={sigma}"),
            ObfuscationMethod::Noise { sigma, .. } => format!("sigma={sigma}"),
            ObfuscationMethod::Downsample { scale } => format!("s={scale}"),
            ObfuscationMethod::RubberSheet { .. } => String::new(),
            ObfuscationMethod::StyleTransfer { iterations, .. } => format!("e={iterations}"),
        }
    }
}

/// A method grid point: parameters only. Donor samples and per-probe noise
/// seeds are bound when the spec is realized against a concrete probe, so
/// the same spec can be applied across a whole probe split.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    None,
    Blur { sigma: f64 },
    Noise { sigma: f64 },
    Downsample { scale: f64 },
    RubberSheet,
    StyleTransfer { iterations: usize },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::None => "none",
            MethodSpec::Blur { .. } => "blur",
            MethodSpec::Noise { .. } => "noise",
            MethodSpec::Downsample { .. } => "downsample",
            MethodSpec::RubberSheet => "rubber_sheet",
            MethodSpec::StyleTransfer { .. } => "style_transfer",
        }
    }

    pub fn param_label(&self) -> String {
        match self {
            MethodSpec::None => String::new(),
            MethodSpec::Blur { sigma } => format!("sigma={sigma}"),
            MethodSpec::Noise { sigma } => format!("sigma={sigma}"),
            MethodSpec::Downsample { scale } => format!("s={scale}"),
            MethodSpec::RubberSheet => String::new(),
            MethodSpec::StyleTransfer { iterations } => format!("e={iterations}"),
        }
    }
}

/// Seed streams for per-probe randomness, disjoint from the dataset
/// generator's streams.
const DONOR_STREAM_BASE: u64 = 3_000_000;
const NOISE_STREAM_BASE: u64 = 4_000_000;

/// Picks the seeded donor for a probe: a uniformly drawn identity other
/// than the victim, then a uniformly drawn enroll-split sample of that
/// identity. Depends only on (seed, probe_index, victim), so every method
/// row of a run attacks with identical donors.
pub fn assign_donor<'a>(
    dataset: &'a Dataset,
    victim_id: u32,
    probe_index: usize,
    seed: RngSeed,
) -> Result<&'a EyeSample> {
    let mut ids: Vec<u32> = dataset
        .identity_ids()
        .into_iter()
        .filter(|&i| i != victim_id)
        .collect();
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(Error::InvalidState(
            "donor assignment needs at least two identities".into(),
        ));
    }
    let mut rng = seed.derive(DONOR_STREAM_BASE + probe_index as u64).rng();
    let donor_id = ids[rng.gen_range(0..ids.len())];
    let pool: Vec<&EyeSample> = dataset
        .enroll()
        .filter(|s| s.identity_id == donor_id)
        .collect();
    if pool.is_empty() {
        return Err(Error::InvalidState(format!(
            "identity {donor_id} has no enroll-split samples"
        )));
    }
    Ok(pool[rng.gen_range(0..pool.len())])
}

/// Binds a grid point to a probe, producing the concrete method. `None`
/// means the identity method (baseline row). The donor sample is used by
/// the rubber-sheet and style-transfer methods and ignored otherwise.
pub fn realize_method(
    spec: &MethodSpec,
    donor: &EyeSample,
    probe_index: usize,
    run_seed: RngSeed,
    extractor_seed: RngSeed,
) -> Option<ObfuscationMethod> {
    match spec {
        MethodSpec::None => None,
        MethodSpec::Blur { sigma } => Some(ObfuscationMethod::Blur { sigma: *sigma }),
        MethodSpec::Noise { sigma } => Some(ObfuscationMethod::Noise {
            sigma: *sigma,
            seed: run_seed.derive(NOISE_STREAM_BASE + probe_index as u64),
        }),
        MethodSpec::Downsample { scale } => {
            Some(ObfuscationMethod::Downsample { scale: *scale })
        }
        MethodSpec::RubberSheet => Some(ObfuscationMethod::RubberSheet {
            donor: donor.clone(),
        }),
        MethodSpec::StyleTransfer { iterations } => Some(
            ObfuscationMethod::style_transfer_default(donor.clone(), *iterations, extractor_seed),
        ),
    }
}

/// Extracts the iris patch (bounding box of iris-class pixels) plus the
/// in-patch iris mask and patch origin.
pub fn iris_patch(sample: &EyeSample) -> Result<(EyeImage, BinaryMask, (usize, usize))> {
    let bbox = sample
        .mask
        .class_bbox(&[EyeClass::Iris])
        .ok_or_else(|| Error::SegmentationFailure("sample has no iris pixels".into()))?;
    let (x0, y0, w, h) = bbox;
    let patch = sample.image.crop(x0, y0, w, h)?;
    let mut mask = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if sample.mask.class_at(x0 + x, y0 + y) == EyeClass::Iris {
                mask.set(x, y, true);
            }
        }
    }
    Ok((patch, mask, (x0, y0)))
}

/// Applies an obfuscation method to an eye sample.
///
/// Pipeline: extract the iris patch, apply the method to it, restore the
/// original glint pixels exactly, and composite the patch back under the
/// iris mask. Pixels whose mask class is not iris are bit-identical to the
/// input.
pub fn obfuscate(sample: &EyeSample, method: &ObfuscationMethod) -> Result<EyeImage> {
    let (patch, patch_mask, (x0, y0)) = iris_patch(sample)?;
    let processed = match method {
        ObfuscationMethod::Blur { sigma } => convolve2d(&patch, &gaussian_kernel(*sigma)?)?,
        ObfuscationMethod::Noise { sigma, seed } => add_gaussian_noise(&patch, *sigma, *seed)?,
        ObfuscationMethod::Downsample { scale } => {
            let down = resample(&patch, *scale, ResampleMethod::Nearest)?;
            upsample_to(&down, patch.width(), patch.height(), ResampleMethod::Nearest)?
        }
        ObfuscationMethod::RubberSheet { donor } => {
            let swapped = swap_iris(sample, donor)?;
            swapped.crop(x0, y0, patch.width(), patch.height())?
        }
        ObfuscationMethod::StyleTransfer {
            donor,
            iterations,
            content_weight,
            style_weight,
            step_size,
            extractor_seed,
        } => {
            let donor_bbox = donor
                .mask
                .class_bbox(&[EyeClass::Iris])
                .ok_or_else(|| Error::SegmentationFailure("donor has no iris pixels".into()))?;
            let donor_patch = donor
                .image
                .crop(donor_bbox.0, donor_bbox.1, donor_bbox.2, donor_bbox.3)?;
            let donor_patch = upsample_to(
                &donor_patch,
                patch.width(),
                patch.height(),
                ResampleMethod::Bilinear,
            )?;
            let extractor = FeatureExtractor::new(*extractor_seed);
            style_transfer(
                &extractor,
                &patch,
                &donor_patch,
                *iterations,
                *content_weight,
                *style_weight,
                *step_size,
            )?
        }
    };

    // Restore the original glint pixels exactly, then composite the patch
    // under the iris mask.
    let mut processed = processed;
    for y in 0..patch.height() {
        for x in 0..patch.width() {
            if sample.glints.get(x0 + x, y0 + y) {
                processed.set(x, y, sample.image.get(x0 + x, y0 + y));
            }
        }
    }
    composite(&sample.image, &processed, &patch_mask, (x0, y0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gaze_vector, render_eye, IdentitySpec};

    fn sample(id: u32, seed: u64) -> EyeSample {
        let spec = IdentitySpec {
            identity_id: id,
            texture_seed: RngSeed(500 + id as u64),
            motif_seed: RngSeed(900 + id as u64),
            iris_radius_base: 46.0,
            pupil_ratio_base: 0.39,
            pigmentation: 0.45,
        };
        render_eye(&spec, gaze_vector(0.08, -0.05), RngSeed(seed)).unwrap()
    }

    fn ring_image(annulus: &IrisAnnulus) -> EyeImage {
        // intensity is a smooth function of normalized radius only
        let mut img = EyeImage::filled(200, 200, 0.5);
        for y in 0..200 {
            for x in 0..200 {
                let dx = x as f64 - annulus.iris_center.0;
                let dy = y as f64 - annulus.iris_center.1;
                let d = (dx * dx + dy * dy).sqrt();
                let t = (d - annulus.pupil_radius) / (annulus.iris_radius - annulus.pupil_radius);
                img.set(x, y, 0.5 + 0.3 * (3.0 * t).sin());
            }
        }
        img
    }

    fn spoke_image(annulus: &IrisAnnulus) -> EyeImage {
        // intensity is a smooth function of angle only
        let mut img = EyeImage::filled(200, 200, 0.5);
        for y in 0..200 {
            for x in 0..200 {
                let dx = x as f64 - annulus.iris_center.0;
                let dy = y as f64 - annulus.iris_center.1;
                img.set(x, y, 0.5 + 0.35 * (4.0 * dy.atan2(dx)).cos());
            }
        }
        img
    }

    fn test_annulus() -> IrisAnnulus {
        IrisAnnulus::new((100.0, 100.0), 18.0, (100.0, 100.0), 46.0).unwrap()
    }

    #[test]
    fn unwrap_rings_make_constant_rows() {
        let a = test_annulus();
        let strip = unwrap(&ring_image(&a), &a, STRIP_RADIAL, STRIP_ANGULAR).unwrap();
        for r in 0..strip.radial() {
            let row: Vec<f64> = (0..strip.angular()).map(|c| strip.get(r, c)).collect();
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo < 1e-3, "row {r} spread {}", hi - lo);
        }
    }

    #[test]
    fn unwrap_row_zero_is_pupil_circle() {
        let a = test_annulus();
        let img = spoke_image(&a);
        let strip = unwrap(&img, &a, STRIP_RADIAL, STRIP_ANGULAR).unwrap();
        for c in [0, 40, 100, 200] {
            let theta = 2.0 * std::f64::consts::PI * c as f64 / STRIP_ANGULAR as f64;
            let (x, y) = a.pupil_point(theta);
            assert!((strip.get(0, c) - img.sample_bilinear(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_spokes_make_constant_columns() {
        let a = test_annulus();
        let strip = unwrap(&spoke_image(&a), &a, STRIP_RADIAL, STRIP_ANGULAR).unwrap();
        for c in (0..strip.angular()).step_by(7) {
            let col: Vec<f64> = (0..strip.radial()).map(|r| strip.get(r, c)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo < 2e-2, "column {c} spread {}", hi - lo);
        }
    }

    #[test]
    fn unwrap_matches_independent_polar_sampler() {
        // brute-force oracle: recompute the mapping point per (row, column)
        let a = IrisAnnulus::new((99.0, 101.5), 17.0, (100.0, 100.0), 45.0).unwrap();
        let img = spoke_image(&a);
        let strip = unwrap(&img, &a, 32, 96).unwrap();
        for r in [0usize, 11, 31] {
            for c in [0usize, 17, 48, 95] {
                let t = r as f64 / 31.0;
                let theta = 2.0 * std::f64::consts::PI * c as f64 / 96.0;
                let px = 99.0 + 17.0 * theta.cos();
                let py = 101.5 + 17.0 * theta.sin();
                let ix = 100.0 + 45.0 * theta.cos();
                let iy = 100.0 + 45.0 * theta.sin();
                let expect = img.sample_bilinear((1.0 - t) * px + t * ix, (1.0 - t) * py + t * iy);
                assert!((strip.get(r, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unwrap_rejects_out_of_bounds_annulus() {
        let img = EyeImage::filled(100, 100, 0.5);
        let a = IrisAnnulus::new((50.0, 50.0), 20.0, (50.0, 50.0), 60.0).unwrap();
        assert!(unwrap(&img, &a, 16, 64).is_err());
    }

    #[test]
    fn wrap_leaves_outside_pixels_untouched() {
        let a = test_annulus();
        let target = spoke_image(&a);
        let strip = unwrap(&target, &a, STRIP_RADIAL, STRIP_ANGULAR).unwrap();
        let out = wrap(&strip, &a, &target).unwrap();
        for y in 0..200 {
            for x in 0..200 {
                let dx = x as f64 - 100.0;
                let dy = y as f64 - 100.0;
                let d = (dx * dx + dy * dy).sqrt();
                if !(18.0..=46.0).contains(&d) {
                    assert_eq!(out.get(x, y), target.get(x, y), "pixel ({x},{y}) changed");
                }
            }
        }
    }

    #[test]
    fn wrap_constant_strip_paints_annulus() {
        let a = test_annulus();
        let strip =
            PolarStrip::new(8, 32, vec![0.25; 8 * 32]).unwrap();
        let target = EyeImage::filled(200, 200, 0.9);
        let out = wrap(&strip, &a, &target).unwrap();
        for y in 0..200 {
            for x in 0..200 {
                let dx = x as f64 - 100.0;
                let dy = y as f64 - 100.0;
                let d = (dx * dx + dy * dy).sqrt();
                if (18.5..=45.5).contains(&d) {
                    assert!((out.get(x, y) - 0.25).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn polar_round_trip_within_tolerance() {
        // band-limited texture: smooth in both radius and angle
        let a = test_annulus();
        let mut img = EyeImage::filled(200, 200, 0.5);
        for y in 0..200 {
            for x in 0..200 {
                let dx = x as f64 - 100.0;
                let dy = y as f64 - 100.0;
                let d = (dx * dx + dy * dy).sqrt();
                let t = (d - 18.0) / 28.0;
                let phi = dy.atan2(dx);
                img.set(
                    x,
                    y,
                    0.5 + 0.2 * (6.0 * phi).cos() * (2.0 * std::f64::consts::PI * t).sin(),
                );
            }
        }
        let strip = unwrap(&img, &a, STRIP_RADIAL, STRIP_ANGULAR).unwrap();
        let out = wrap(&strip, &a, &img).unwrap();
        let mut max_err = 0.0f64;
        for y in 0..200 {
            for x in 0..200 {
                let dx = x as f64 - 100.0;
                let dy = y as f64 - 100.0;
                let d = (dx * dx + dy * dy).sqrt();
                if (18.0..=46.0).contains(&d) {
                    max_err = max_err.max((out.get(x, y) - img.get(x, y)).abs());
                }
            }
        }
        assert!(max_err <= 0.05, "round-trip error {max_err}");
    }

    #[test]
    fn wrap_round_trip_on_noneccentric_fit() {
        // small eccentricity: inverse mapping must still converge
        let a = IrisAnnulus::new((101.5, 99.0), 16.0, (100.0, 100.0), 44.0).unwrap();
        let img = ring_image(&a);
        let strip = unwrap(&img, &a, STRIP_RADIAL, STRIP_ANGULAR).unwrap();
        let out = wrap(&strip, &a, &img).unwrap();
        // forward-map a few strip cells and check the wrapped image there
        for &(r, c) in &[(5usize, 10usize), (30, 100), (60, 200)] {
            let t = r as f64 / 63.0;
            let theta = 2.0 * std::f64::consts::PI * c as f64 / 256.0;
            let (px, py) = a.pupil_point(theta);
            let (ix, iy) = a.iris_point(theta);
            let x = ((1.0 - t) * px + t * ix).round() as usize;
            let y = ((1.0 - t) * py + t * iy).round() as usize;
            assert!(
                (out.get(x, y) - img.get(x, y)).abs() < 0.05,
                "cell ({r},{c})"
            );
        }
    }

    #[test]
    fn extractor_is_deterministic() {
        let a = FeatureExtractor::new(RngSeed(77));
        let b = FeatureExtractor::new(RngSeed(77));
        let patch = sample(0, 1).image.crop(120, 80, 64, 64).unwrap();
        assert_eq!(
            style_features(&a, &patch).unwrap(),
            style_features(&b, &patch).unwrap()
        );
        let c = FeatureExtractor::new(RngSeed(78));
        assert_ne!(
            style_features(&a, &patch).unwrap(),
            style_features(&c, &patch).unwrap()
        );
    }

    #[test]
    fn style_features_zero_patch() {
        let ex = FeatureExtractor::new(RngSeed(1));
        let patch = EyeImage::filled(32, 32, 0.0);
        let v = style_features(&ex, &patch).unwrap();
        assert_eq!(v.len(), STYLE_DIM);
        // zero input, zero bias: all means are 0 (stds hit the eps floor)
        let mut off = 0;
        for ch in EXTRACTOR_CHANNELS {
            for i in 0..ch {
                assert_eq!(v[off + i], 0.0, "mean channel {i}");
            }
            off += 2 * ch;
        }
    }

    #[test]
    fn style_features_rejects_small_patch() {
        let ex = FeatureExtractor::new(RngSeed(1));
        let patch = EyeImage::filled(12, 20, 0.5);
        assert!(style_features(&ex, &patch).is_err());
    }

    #[test]
    fn single_stage_matches_hand_computation() {
        // one stage, 1->1 channel, known kernel, 4x4 input
        let mut stage = ConvStage {
            in_ch: 1,
            out_ch: 1,
            weights: vec![0.0; 9],
        };
        stage.weights[4] = 2.0; // center
        stage.weights[5] = -1.0; // east neighbor
        let input = Tensor {
            ch: 1,
            h: 4,
            w: 4,
            data: (1..=16).map(|v| v as f64 / 16.0).collect(),
        };
        let pre = stage.conv(&input);
        // pre[y][x] = 2*in[y][x] - in[y][x+1] (zero pad beyond the east edge)
        for y in 0..4 {
            for x in 0..4 {
                let east = if x + 1 < 4 { input.at(0, y, x + 1) } else { 0.0 };
                let expect = 2.0 * input.at(0, y, x) - east;
                assert!((pre.at(0, y, x) - expect).abs() < 1e-12);
            }
        }
        let pooled = avg_pool(&relu(&pre));
        // hand arithmetic for the (0,0) window
        let w00 = [pre.at(0, 0, 0), pre.at(0, 0, 1), pre.at(0, 1, 0), pre.at(0, 1, 1)];
        let expect00 = w00.iter().map(|v| v.max(0.0)).sum::<f64>() / 4.0;
        assert!((pooled.at(0, 0, 0) - expect00).abs() < 1e-12);
        // mean/std over the 2x2 pooled map by hand
        let vals = [
            pooled.at(0, 0, 0),
            pooled.at(0, 0, 1),
            pooled.at(0, 1, 0),
            pooled.at(0, 1, 1),
        ];
        let mean = vals.iter().sum::<f64>() / 4.0;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        let (means, stds) = channel_stats(&pooled);
        assert!((means[0] - mean).abs() < 1e-12);
        assert!((stds[0] - (var + VAR_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn transfer_gradient_matches_finite_differences() {
        let ex = FeatureExtractor::new(RngSeed(31));
        let victim = sample(0, 5).image.crop(130, 90, 24, 24).unwrap();
        let donor = sample(1, 6).image.crop(128, 88, 24, 24).unwrap();
        let targets = transfer_targets(&ex, &victim, &donor);
        // perturb away from the zero-gradient initialization
        let mut data = victim.data().to_vec();
        let mut rng = RngSeed(99).rng();
        for v in &mut data {
            *v = (*v + rng.gen_range(-0.08..0.08)).clamp(0.02, 0.98);
        }
        let x = EyeImage::from_data(24, 24, data).unwrap();
        let (_, grad) = transfer_loss_grad(&ex, &x, &targets, 1.0, 1.0);

        let h = 1e-4;
        let mut checked = 0;
        let mut idx_rng = RngSeed(7).rng();
        while checked < 6 {
            let i = idx_rng.gen_range(0..x.data().len());
            let mut lo = x.data().to_vec();
            let mut hi = lo.clone();
            lo[i] -= h;
            hi[i] += h;
            let (l_lo, _) = transfer_loss_grad(
                &ex,
                &EyeImage::from_data(24, 24, lo).unwrap(),
                &targets,
                1.0,
                1.0,
            );
            let (l_hi, _) = transfer_loss_grad(
                &ex,
                &EyeImage::from_data(24, 24, hi).unwrap(),
                &targets,
                1.0,
                1.0,
            );
            let fd = (l_hi - l_lo) / (2.0 * h);
            if fd.abs() < 1e-8 {
                continue; // flat pixel (rectifier dead zone); not informative
            }
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs());
            assert!(rel <= 1e-3, "pixel {i}: analytic {} vs fd {fd}", grad[i]);
            checked += 1;
        }
    }

    #[test]
    fn self_transfer_is_fixed_point() {
        let ex = FeatureExtractor::new(RngSeed(4));
        let patch = sample(0, 9).image.crop(120, 80, 32, 32).unwrap();
        let (out, trace) =
            style_transfer_trace(&ex, &patch, &patch, 5, 1.0, 1.0, DEFAULT_STEP_SIZE).unwrap();
        assert_eq!(out, patch);
        for l in trace {
            assert!(l.abs() < 1e-18, "loss {l}");
        }
    }

    #[test]
    fn zero_style_weight_keeps_victim() {
        let ex = FeatureExtractor::new(RngSeed(4));
        let victim = sample(0, 9).image.crop(120, 80, 32, 32).unwrap();
        let donor = sample(1, 10).image.crop(120, 80, 32, 32).unwrap();
        let out = style_transfer(&ex, &victim, &donor, 4, 1.0, 0.0, DEFAULT_STEP_SIZE).unwrap();
        assert_eq!(out, victim);
    }

    #[test]
    fn transfer_loss_descends() {
        let ex = FeatureExtractor::new(RngSeed(12));
        let victim = sample(0, 3).image.crop(120, 80, 40, 40).unwrap();
        let donor = sample(1, 4).image.crop(118, 78, 40, 40).unwrap();
        let (_, trace) =
            style_transfer_trace(&ex, &victim, &donor, 12, 1.0, 1.0, DEFAULT_STEP_SIZE).unwrap();
        let mut allowed_rise = 1; // one-time halving absorbs a single overshoot
        for k in 1..trace.len() {
            if trace[k] > trace[k - 1] {
                assert!(allowed_rise > 0, "loss rose twice: {:?}", trace);
                allowed_rise -= 1;
            }
        }
        assert!(trace[trace.len() - 1] < trace[0], "no net descent: {:?}", trace);
    }

    #[test]
    fn transfer_dimension_mismatch_rejected() {
        let ex = FeatureExtractor::new(RngSeed(4));
        let a = EyeImage::filled(32, 32, 0.5);
        let b = EyeImage::filled(30, 32, 0.5);
        assert!(style_transfer(&ex, &a, &b, 1, 1.0, 1.0, 0.05).is_err());
    }

    fn glint_pixels_exact(original: &EyeSample, obfuscated: &EyeImage) {
        let mut n = 0;
        for y in 0..original.image.height() {
            for x in 0..original.image.width() {
                if original.glints.get(x, y) {
                    assert_eq!(
                        obfuscated.get(x, y),
                        original.image.get(x, y),
                        "glint pixel ({x},{y})"
                    );
                    n += 1;
                }
            }
        }
        assert!(n > 0, "sample rendered without glint pixels");
    }

    fn non_iris_pixels_exact(original: &EyeSample, obfuscated: &EyeImage) {
        for y in 0..original.image.height() {
            for x in 0..original.image.width() {
                if original.mask.class_at(x, y) != EyeClass::Iris {
                    assert_eq!(
                        obfuscated.get(x, y),
                        original.image.get(x, y),
                        "non-iris pixel ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn all_methods_preserve_glints_and_non_iris_pixels() {
        let victim = sample(0, 1);
        let donor = sample(1, 2);
        let methods = vec![
            ObfuscationMethod::Blur { sigma: 2.0 },
            ObfuscationMethod::Noise {
                sigma: 0.1,
                seed: RngSeed(5),
            },
            ObfuscationMethod::Downsample { scale: 3.0 },
            ObfuscationMethod::RubberSheet {
                donor: donor.clone(),
            },
            ObfuscationMethod::style_transfer_default(donor.clone(), 2, RngSeed(11)),
        ];
        for m in &methods {
            let out = obfuscate(&victim, m).unwrap();
            glint_pixels_exact(&victim, &out);
            non_iris_pixels_exact(&victim, &out);
        }
    }

    #[test]
    fn obfuscate_is_deterministic() {
        let victim = sample(0, 1);
        let donor = sample(1, 2);
        for m in [
            ObfuscationMethod::Noise {
                sigma: 0.2,
                seed: RngSeed(9),
            },
            ObfuscationMethod::RubberSheet {
                donor: donor.clone(),
            },
        ] {
            let a = obfuscate(&victim, &m).unwrap();
            let b = obfuscate(&victim, &m).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let victim = sample(0, 1);
        let out = obfuscate(
            &victim,
            &ObfuscationMethod::Noise {
                sigma: 0.0,
                seed: RngSeed(1),
            },
        )
        .unwrap();
        assert_eq!(out, victim.image);
    }

    #[test]
    fn unit_scale_downsample_is_identity() {
        let victim = sample(0, 1);
        let out = obfuscate(&victim, &ObfuscationMethod::Downsample { scale: 1.0 }).unwrap();
        assert_eq!(out, victim.image);
    }

    #[test]
    fn blur_interior_matches_direct_convolution() {
        let victim = sample(0, 1);
        let out = obfuscate(&victim, &ObfuscationMethod::Blur { sigma: 1.0 }).unwrap();
        let (patch, _, (x0, y0)) = iris_patch(&victim).unwrap();
        let blurred = convolve2d(&patch, &gaussian_kernel(1.0).unwrap()).unwrap();
        let mut checked = 0;
        for y in 4..patch.height() - 4 {
            for x in 4..patch.width() - 4 {
                let (gx, gy) = (x0 + x, y0 + y);
                // interior iris pixels at least 4 px from any non-iris pixel
                // or glint (the glint restore overwrites blurred values)
                let mut interior = true;
                'scan: for dy in -4i64..=4 {
                    for dx in -4i64..=4 {
                        let nx = (gx as i64 + dx) as usize;
                        let ny = (gy as i64 + dy) as usize;
                        if victim.mask.class_at(nx, ny) != EyeClass::Iris
                            || victim.glints.get(nx, ny)
                        {
                            interior = false;
                            break 'scan;
                        }
                    }
                }
                if interior {
                    assert_eq!(out.get(gx, gy), blurred.get(x, y), "pixel ({gx},{gy})");
                    checked += 1;
                }
            }
        }
        assert!(checked > 500, "only {checked} interior pixels checked");
    }

    #[test]
    fn self_swap_recovers_iris_within_tolerance() {
        let victim = sample(0, 1);
        let out = obfuscate(
            &victim,
            &ObfuscationMethod::RubberSheet {
                donor: victim.clone(),
            },
        )
        .unwrap();
        // pupil pixels unchanged (annulus excludes the pupil)
        for y in 0..victim.image.height() {
            for x in 0..victim.image.width() {
                if victim.mask.class_at(x, y) == EyeClass::Pupil {
                    assert_eq!(out.get(x, y), victim.image.get(x, y));
                }
            }
        }
        // iris pixels away from glints and boundaries survive the polar
        // round trip; tolerance matches the wrap/unwrap check
        let a = &victim.annulus_truth;
        let mut max_err = 0.0f64;
        for y in 0..victim.image.height() {
            for x in 0..victim.image.width() {
                if victim.mask.class_at(x, y) != EyeClass::Iris {
                    continue;
                }
                let dx = x as f64 - a.iris_center.0;
                let dy = y as f64 - a.iris_center.1;
                let d = (dx * dx + dy * dy).sqrt();
                if d < a.pupil_radius + 2.0 || d > a.iris_radius - 2.0 {
                    continue;
                }
                // donor-glint inpainting rewrites texture near glints, so
                // the round-trip comparison skips a wider margin there
                let near_glint = (-6i64..=6).any(|gy| {
                    (-6i64..=6).any(|gx| {
                        let nx = (x as i64 + gx).clamp(0, 319) as usize;
                        let ny = (y as i64 + gy).clamp(0, 239) as usize;
                        victim.glints.get(nx, ny)
                    })
                });
                if near_glint {
                    continue;
                }
                max_err = max_err.max((out.get(x, y) - victim.image.get(x, y)).abs());
            }
        }
        assert!(max_err <= 0.06, "self-swap error {max_err}");
    }
}
