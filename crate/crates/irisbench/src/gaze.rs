//! Model-based gaze estimation (utility evaluation).
//!
//! Features are eye landmarks only: the pupil centroid and the offset from
//! the pupil to the nearest glint, both normalized by an iris radius
//! estimate derived from the mask. A degree-2 polynomial maps them to yaw
//! and pitch. Because the features depend only on the segmentation and the
//! glints, any obfuscation that leaves pupil and glint pixels untouched
//! cannot move ground-truth-mask estimates; degradation enters through the
//! proxy re-segmentation of obfuscated images.

use rayon::prelude::*;

use crate::imagecore::RngSeed;
use crate::linalg;
use crate::obfuscation::{assign_donor, obfuscate, realize_method, MethodSpec};
use crate::segmentation::{
    degrade_proxy_segment, detect_glints, glint_blobs, iou, EyeClass, GlintMask,
    SegmentationMask, GLINT_THRESHOLD,
};
use crate::synthgen::{Dataset, EyeSample};
use crate::{Error, Result};

/// Polynomial terms per output: bias, linear, squares, and the pupil/glint
/// cross terms.
pub const FEATURE_TERMS: usize = 12;
/// Minimum calibration pairs for a fit.
pub const MIN_CALIBRATION_PAIRS: usize = 24;

/// Landmark features: pupil center and pupil-to-glint offset, both in
/// units of the mask-estimated iris radius.
pub type GazeFeatures = [f64; 4];

/// Centroid of pupil-class pixels.
pub fn pupil_centroid(mask: &SegmentationMask) -> Result<(f64, f64)> {
    let mut n = 0usize;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.class_at(x, y) == EyeClass::Pupil {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    if n == 0 {
        return Err(Error::FeatureFailure("no pupil pixels in mask".into()));
    }
    Ok((sx / n as f64, sy / n as f64))
}

/// Landmark extraction. The iris radius estimate is
/// sqrt(area(iris or pupil) / pi) from the same mask, so no circle fit is
/// needed and the features inherit nothing from image intensities.
pub fn extract_features(mask: &SegmentationMask, glints: &GlintMask) -> Result<GazeFeatures> {
    let (px, py) = pupil_centroid(mask)?;
    let area = mask.count(EyeClass::Iris) + mask.count(EyeClass::Pupil);
    let r = (area as f64 / std::f64::consts::PI).sqrt();
    if r < 1.0 {
        return Err(Error::FeatureFailure("iris region too small".into()));
    }
    let glint = glints
        .blobs
        .iter()
        .min_by(|a, b| {
            let da = (a.centroid.0 - px).powi(2) + (a.centroid.1 - py).powi(2);
            let db = (b.centroid.0 - px).powi(2) + (b.centroid.1 - py).powi(2);
            da.partial_cmp(&db).unwrap()
        })
        .ok_or_else(|| Error::FeatureFailure("no glints detected".into()))?;
    let cx = mask.width() as f64 / 2.0;
    let cy = mask.height() as f64 / 2.0;
    Ok([
        (px - cx) / r,
        (py - cy) / r,
        (px - glint.centroid.0) / r,
        (py - glint.centroid.1) / r,
    ])
}

fn poly_terms(f: &GazeFeatures) -> [f64; FEATURE_TERMS] {
    let [x, y, ox, oy] = *f;
    [
        1.0,
        x,
        y,
        ox,
        oy,
        x * x,
        y * y,
        ox * ox,
        oy * oy,
        x * y,
        x * ox,
        y * oy,
    ]
}

/// Gaze angles (yaw, pitch) of a unit direction vector.
pub fn yaw_pitch_of(g: (f64, f64, f64)) -> (f64, f64) {
    (g.0.atan2(g.2), g.1.clamp(-1.0, 1.0).asin())
}

/// Degree-2 polynomial regressor from landmark features to (yaw, pitch).
#[derive(Debug, Clone, PartialEq)]
pub struct GazeModel {
    /// coef[0] predicts yaw, coef[1] pitch, each over the 12 terms.
    coef: [[f64; FEATURE_TERMS]; 2],
}

impl GazeModel {
    /// Least-squares fit of both outputs over the calibration pairs
    /// (labels in radians).
    pub fn fit(features: &[GazeFeatures], labels: &[(f64, f64)]) -> Result<GazeModel> {
        if features.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} feature vectors vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if features.len() < MIN_CALIBRATION_PAIRS {
            return Err(Error::InvalidParameter(format!(
                "need at least {MIN_CALIBRATION_PAIRS} calibration pairs, got {}",
                features.len()
            )));
        }
        let design: Vec<Vec<f64>> = features.iter().map(|f| poly_terms(f).to_vec()).collect();
        let mut coef = [[0.0; FEATURE_TERMS]; 2];
        for (out, pick) in [(0usize, 0usize), (1, 1)] {
            let rhs: Vec<f64> = labels
                .iter()
                .map(|&(yaw, pitch)| if pick == 0 { yaw } else { pitch })
                .collect();
            let sol = linalg::lstsq(&design, &rhs).ok_or_else(|| {
                Error::FitFailure("rank-deficient design matrix".into())
            })?;
            coef[out].copy_from_slice(&sol);
        }
        Ok(GazeModel { coef })
    }

    /// Predicted (yaw, pitch) in radians.
    pub fn yaw_pitch(&self, f: &GazeFeatures) -> (f64, f64) {
        let terms = poly_terms(f);
        let mut out = [0.0; 2];
        for (o, c) in out.iter_mut().zip(&self.coef) {
            *o = c.iter().zip(&terms).map(|(a, b)| a * b).sum();
        }
        (out[0], out[1])
    }

    /// Predicted gaze as a unit 3-vector.
    pub fn estimate(&self, f: &GazeFeatures) -> (f64, f64, f64) {
        let (yaw, pitch) = self.yaw_pitch(f);
        (
            yaw.sin() * pitch.cos(),
            pitch.sin(),
            yaw.cos() * pitch.cos(),
        )
    }
}

fn check_unit(v: (f64, f64, f64), name: &str) -> Result<()> {
    let n = (v.0 * v.0 + v.1 * v.1 + v.2 * v.2).sqrt();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "{name} vector has norm {n}, expected unit"
        )));
    }
    Ok(())
}

/// Angle between two unit gaze vectors, in degrees.
pub fn angular_error(pred: (f64, f64, f64), truth: (f64, f64, f64)) -> Result<f64> {
    check_unit(pred, "prediction")?;
    check_unit(truth, "truth")?;
    let dot = pred.0 * truth.0 + pred.1 * truth.1 + pred.2 * truth.2;
    Ok(dot.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Ground-truth landmark features of a sample: its published mask and
/// glint raster.
pub fn gt_features(sample: &EyeSample) -> Result<GazeFeatures> {
    extract_features(&sample.mask, &glint_blobs(&sample.glints))
}

/// Fits the estimator on the enroll split using ground-truth masks and
/// glint rasters.
pub fn fit_on_enroll(dataset: &Dataset) -> Result<GazeModel> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for s in dataset.enroll() {
        features.push(gt_features(s)?);
        labels.push(yaw_pitch_of(s.gaze_label));
    }
    GazeModel::fit(&features, &labels)
}

/// One probe through the proxy pipeline, given the segmentation and glints
/// already estimated from the (possibly obfuscated) image: extract
/// features, estimate gaze, and score the segmentation against truth.
pub fn proxy_probe(
    model: &GazeModel,
    sample: &EyeSample,
    proxy: &SegmentationMask,
    glints: &GlintMask,
) -> Result<ProxyProbe> {
    let features = extract_features(proxy, glints)?;
    let err = angular_error(model.estimate(&features), sample.gaze_label)?;
    Ok(ProxyProbe {
        error_deg: err,
        skin_iou: iou(proxy, &sample.mask, EyeClass::Skin)?,
        sclera_iou: iou(proxy, &sample.mask, EyeClass::Sclera)?,
        iris_iou: iou(proxy, &sample.mask, EyeClass::Iris)?,
        pupil_iou: iou(proxy, &sample.mask, EyeClass::Pupil)?,
    })
}

/// Per-probe proxy-path outcome.
#[derive(Debug, Clone, Copy)]
pub struct ProxyProbe {
    pub error_deg: f64,
    pub skin_iou: f64,
    pub sclera_iou: f64,
    pub iris_iou: f64,
    pub pupil_iou: f64,
}

/// Gaze metrics over one method row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeMetrics {
    pub mean_deg: f64,
    pub skin_iou: f64,
    pub sclera_iou: f64,
    pub iris_iou: f64,
    pub pupil_iou: f64,
    pub n_failed: usize,
    pub n_probes: usize,
}

pub(crate) fn summarize_proxy(results: &[Option<ProxyProbe>]) -> GazeMetrics {
    let ok: Vec<&ProxyProbe> = results.iter().flatten().collect();
    let n = ok.len() as f64;
    let mean = |f: fn(&ProxyProbe) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|p| f(p)).sum::<f64>() / n
        }
    };
    GazeMetrics {
        mean_deg: mean(|p| p.error_deg),
        skin_iou: mean(|p| p.skin_iou),
        sclera_iou: mean(|p| p.sclera_iou),
        iris_iou: mean(|p| p.iris_iou),
        pupil_iou: mean(|p| p.pupil_iou),
        n_failed: results.len() - ok.len(),
        n_probes: results.len(),
    }
}

/// Obfuscates every probe with the grid point and evaluates gaze through
/// the proxy segmentation path. Donor assignment matches the recognition
/// evaluation streams.
pub fn evaluate_gaze(
    dataset: &Dataset,
    model: &GazeModel,
    spec: &MethodSpec,
    run_seed: RngSeed,
    extractor_seed: RngSeed,
) -> Result<GazeMetrics> {
    let probes: Vec<&EyeSample> = dataset.probe().collect();
    if probes.is_empty() {
        return Err(Error::InvalidState("probe split is empty".into()));
    }
    let results: Vec<Option<ProxyProbe>> = probes
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| {
            let donor = assign_donor(dataset, sample.identity_id, idx, run_seed).ok()?;
            let method = realize_method(spec, donor, idx, run_seed, extractor_seed);
            let image = match &method {
                Some(m) => obfuscate(sample, m).ok()?,
                None => sample.image.clone(),
            };
            let proxy = degrade_proxy_segment(&image).ok()?;
            let glints = detect_glints(&image, &proxy, GLINT_THRESHOLD).ok()?;
            proxy_probe(model, sample, &proxy, &glints).ok()
        })
        .collect();
    Ok(summarize_proxy(&results))
}

/// Mean angular error over the probe split with ground-truth masks and
/// glint rasters (no obfuscation, no proxy segmentation).
pub fn evaluate_gaze_gt(dataset: &Dataset, model: &GazeModel) -> Result<(f64, usize)> {
    let probes: Vec<&EyeSample> = dataset.probe().collect();
    if probes.is_empty() {
        return Err(Error::InvalidState("probe split is empty".into()));
    }
    let errors: Vec<Option<f64>> = probes
        .par_iter()
        .map(|sample| {
            let f = gt_features(sample).ok()?;
            angular_error(model.estimate(&f), sample.gaze_label).ok()
        })
        .collect();
    let ok: Vec<f64> = errors.iter().flatten().cloned().collect();
    if ok.is_empty() {
        return Err(Error::InvalidState("no probe produced features".into()));
    }
    Ok((
        ok.iter().sum::<f64>() / ok.len() as f64,
        errors.len() - ok.len(),
    ))
}
