//! Future-frame predictor and its reconstruction loss.
//!
//! The network is a small encoder–decoder with skip connections. Each
//! encoder level is a 3×3 convolution + tanh followed by 2×2 average pooling;
//! the bottleneck is either a single 3×3 convolution over the stacked input
//! frames or a convolutional GRU run over the frames one at a time; decoder
//! levels upsample, concatenate the matching skip, and convolve. A 1×1
//! projection and a sigmoid produce the predicted frame.

mod checkpoint;
mod loss;
mod model;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use loss::{
    composite_loss, gaussian_taps, gdl_loss, l1_loss, max_scales, msssim_loss, CompositeLoss,
    LossConfig, LossTerm, LossWeights, MSSSIM_WEIGHTS, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW,
};
pub use model::{init_predictor, ConvSpec, FramePredictor, PredictorConfig};

pub(crate) use loss::{check_block, loss_and_grad, loss_value};
