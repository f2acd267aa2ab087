//! Dataset ingestion: the raster file format, source-dataset decoders,
//! jitter sequence, manifests and clip sampling.

mod clips;
mod decode;
mod import;
mod jitter;
mod manifest;
mod rasterfile;

pub use clips::{
    sample_clips, split_segments, Clip, ClipBatch, ClipSampler, ClipSpec, SamplerState,
};
pub use decode::{
    decode_depth, decode_depth_f64, decode_motion, encode_depth, encode_motion, MotionConvention,
};
pub use import::{
    import_qrisp, modality_names, read_color_png, read_depth_png, write_color_png, ImportOptions,
    ModalityBias, ModalityNames,
};
pub use jitter::{halton, jitter_for_frame, jitter_sequence, JITTER_PERIOD};
pub use manifest::{
    load_sequence, read_manifest_list, write_manifest_list, CameraIntrinsics, FrameRecord,
    MotionEncoding, Sequence, SequenceManifest,
};
pub use rasterfile::{decode_raster, encode_raster, read_raster, write_raster, RASTER_HEADER_LEN};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::warp::{JitterOffset, MotionField};

/// One time step's synchronized modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    /// 3 channels in [0, 1].
    pub lr_color: Raster,
    /// 1 channel in [0, 1]; smaller is closer to the camera.
    pub lr_depth: Raster,
    /// Backward flow in LR pixels.
    pub lr_motion: MotionField,
    pub jitter: JitterOffset,
    /// 3 channels at `scale` times the LR size.
    pub hr_target: Option<Raster>,
}

impl FrameBundle {
    pub fn lr_dims(&self) -> (usize, usize) {
        (self.lr_color.height(), self.lr_color.width())
    }

    pub fn check(&self, scale: usize) -> Result<()> {
        let (h, w) = self.lr_dims();
        if self.lr_color.channels() != 3 || self.lr_depth.shape() != (1, h, w) {
            return Err(Error::config(
                "frame needs 3 color and 1 depth channel of equal size",
            ));
        }
        if (self.lr_motion.height(), self.lr_motion.width()) != (h, w) {
            return Err(Error::config("frame motion size differs from color"));
        }
        if let Some(t) = &self.hr_target {
            if t.shape() != (3, h * scale, w * scale) {
                return Err(Error::config(format!(
                    "target {:?} is not {scale}x the {h}x{w} input",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}
