mod eval;
mod gen;
mod gradcheck;
mod loss;
mod report;

pub use eval::{eval_images, eval_video, ImagesReport, VideoReport};
pub use gen::gen_synth;
pub use gradcheck::{gradcheck, GradcheckInstance, GradcheckReport};
pub use loss::{loss, FrameLoss, LossReport};
pub use report::{flatten_summary, report};
