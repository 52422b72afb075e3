//! Trainable parts: layer ops with hand-written backward passes, the
//! extractor/head model, SGD with momentum and the training loop.

pub mod model;
pub mod ops;
pub mod optim;
pub mod train;
