//! Forward smoke runs: feature health of the attention and interaction
//! modules on a fixed-size crop of degraded events and an intensity image.
//!
//! Two pointwise stems lift the inputs to `N` channels (`bins -> N` for
//! the voxel grid, `1 -> N` for the image). The image branch then gains
//! the saliency-enhanced event features, the event branch the engraved
//! image semantics, and both pass through semantic, motion and
//! cross-modality attention.

use evrobust_core::events::VoxelGrid;
use evrobust_core::frames::GrayImage;
use evrobust_nn::interact::{esem_forward, msem_forward, EsemWeights, MsemWeights};
use evrobust_nn::mrm::{mrm_forward, MrmConfig, MrmWeights};
use evrobust_nn::tensor::{conv1x1, ConvKind, ConvWeights, Tensor4};
use evrobust_nn::weights::{RandomInit, WeightStore};

use crate::error::{Error, Result};

const META: &str = "meta.config";

#[derive(Debug, Clone, PartialEq)]
pub struct SmokeWeights {
    pub cfg: MrmConfig,
    pub stem_event: ConvWeights,
    pub stem_image: ConvWeights,
    pub mrm: MrmWeights,
    pub msem: MsemWeights,
    pub esem: EsemWeights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: f64,
    pub variance: f64,
    pub max: f64,
}

impl SmokeWeights {
    /// ESEM mixes to `2N` channels with temporal attention under `cfg`.
    pub fn random(cfg: MrmConfig, bins: usize, seed: u64, scale: f64) -> Self {
        let n = cfg.n();
        let mut init = RandomInit::new(seed, scale);
        Self {
            cfg,
            stem_event: init.pointwise(bins, n),
            stem_image: init.pointwise(1, n),
            mrm: init.mrm(&cfg),
            msem: init.msem(n),
            esem: init.esem(n, cfg, (n / 4).max(1)),
        }
    }

    pub fn bins(&self) -> usize {
        self.stem_event.in_channels()
    }

    pub fn to_store(&self) -> WeightStore {
        let mut s = WeightStore::new();
        let c = &self.cfg;
        let meta = [c.c(), c.t(), c.heads(), usize::from(c.residual())].map(|v| v as f64);
        s.insert(META, Tensor4::new([1, 1, 1, 4], meta.to_vec()).expect("finite meta"));
        s.put_conv("stem.event", &self.stem_event);
        s.put_conv("stem.image", &self.stem_image);
        self.mrm.store_into(&mut s);
        self.msem.store_into(&mut s);
        self.esem.store_into(&mut s);
        s
    }

    pub fn from_store(s: &WeightStore) -> Result<Self> {
        let meta = s.get(META)?;
        let bad = || Error::Input(format!("weights: `{META}` must hold C, T, L and the residual flag"));
        if meta.dims() != [1, 1, 1, 4] || meta.data().iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            return Err(bad());
        }
        let d = meta.data();
        let cfg = MrmConfig::new(d[0] as usize, d[1] as usize, d[2] as usize)?.with_residual(d[3] != 0.0);
        let n = cfg.n();
        let bins = s.get("stem.event.weight")?.dims()[1];
        Ok(Self {
            cfg,
            stem_event: s.conv("stem.event", ConvKind::Pointwise, bins, n)?,
            stem_image: s.conv("stem.image", ConvKind::Pointwise, 1, n)?,
            mrm: MrmWeights::load(s, &cfg)?,
            msem: MsemWeights::load(s, n)?,
            esem: EsemWeights::load(s, n, cfg)?,
        })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_store(&WeightStore::read(path)?)
    }

    pub fn forward(&self, events: &Tensor4, image: &Tensor4) -> Result<Tensor4> {
        let fe = conv1x1(events, &self.stem_event)?;
        let fi = conv1x1(image, &self.stem_image)?;
        let fi2 = fi.add(&msem_forward(&fe, &fi, &self.msem)?)?;
        let fe2 = fe.add(&esem_forward(&fi, &fe, &self.esem)?)?;
        Ok(mrm_forward(&fi2, &fe2, &self.cfg, &self.mrm)?)
    }
}

/// Top-left crop edge: at most `crop`, even, and within the sensor.
pub fn crop_dims(height: usize, width: usize, crop: usize) -> Result<(usize, usize)> {
    let h = height.min(crop) & !1;
    let w = width.min(crop) & !1;
    if h < 2 || w < 2 {
        return Err(Error::Input(format!("{width}x{height} sensor is too small for a smoke crop")));
    }
    Ok((h, w))
}

pub fn feature_stats(w: &SmokeWeights, grid: &VoxelGrid, image: &GrayImage, crop: usize) -> Result<FeatureStats> {
    let (bins, gh, gw) = grid.shape();
    if bins != w.bins() {
        return Err(Error::Input(format!(
            "weights expect {} temporal bins, grid has {bins}",
            w.bins()
        )));
    }
    if image.dims() != (gh, gw) {
        return Err(Error::Input(format!(
            "image is {}x{}, grid is {gw}x{gh}",
            image.width(),
            image.height()
        )));
    }
    let (h, wd) = crop_dims(gh, gw, crop)?;
    let events = Tensor4::from_fn([1, bins, h, wd], |_, b, y, x| grid.get(b, y, x));
    let img = Tensor4::from_fn([1, 1, h, wd], |_, _, y, x| image.get(y, x));
    let out = w.forward(&events, &img)?;
    Ok(FeatureStats {
        mean: out.mean(),
        variance: out.variance(),
        max: out.max(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip_and_forward_is_finite() {
        let cfg = MrmConfig::new(2, 2, 2).unwrap();
        let w = SmokeWeights::random(cfg, 3, 5, 0.4);
        let back = SmokeWeights::from_store(&WeightStore::from_text(&w.to_store().to_text()).unwrap()).unwrap();
        assert_eq!(back, w);
        let grid = VoxelGrid::from_data(3, 5, 7, (0..105).map(|i| f64::from(i % 3) - 1.0).collect()).unwrap();
        let img = GrayImage::from_fn(5, 7, |y, x| (y * 7 + x) as f64 / 35.0).unwrap();
        let s = feature_stats(&w, &grid, &img, 64).unwrap();
        assert!(s.mean.is_finite() && s.variance >= 0.0 && s.max.is_finite());
        assert_eq!(s, feature_stats(&w, &grid, &img, 64).unwrap());
    }

    #[test]
    fn crop_is_even_and_bounded() {
        assert_eq!(crop_dims(100, 81, 64).unwrap(), (64, 64));
        assert_eq!(crop_dims(9, 81, 64).unwrap(), (8, 64));
        assert!(crop_dims(1, 10, 64).is_err());
    }

    #[test]
    fn bin_mismatch_is_reported() {
        let w = SmokeWeights::random(MrmConfig::new(1, 2, 1).unwrap(), 4, 1, 0.3);
        let grid = VoxelGrid::zeros(3, 4, 4).unwrap();
        let img = GrayImage::constant(4, 4, 0.5).unwrap();
        assert!(feature_stats(&w, &grid, &img, 64).is_err());
    }
}
