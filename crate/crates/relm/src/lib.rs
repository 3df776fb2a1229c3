//! Character-level spelling-correction workbench: one small transformer
//! with a hand-written backward pass, three competing training objectives
//! (per-character tagging, autoregressive rewriting, mask-slot infilling),
//! and a synthetic confusion-set language built to measure generalization
//! to errors never seen in training.
//!
//! ## Examples
//!
//! The `examples/` directory is the tour; each one is self-contained and
//! prints its findings:
//!
//! - **`synth_world`** - the Markov-chain language, confusion sets, and
//!   the train/held-out split of directed edits
//! - **`grad_check`** - backprop against central finite differences for
//!   all three objectives
//! - **`train_relm`** - train an infilling corrector and watch it fix
//!   sentences
//! - **`compare_objectives`** - the headline result: seen-edit vs
//!   held-out-edit F1 for all three objectives on equal budgets
//! - **`mask_policies`** - what masked fine-tuning corrupts, and a sweep
//!   over masking rates
//! - **`np_analysis`** - precision as a function of the clean-to-erroneous
//!   test ratio, analytic vs simulated
//! - **`multitask`** - sharing one model across correction and
//!   classification through per-task prompts
//! - **`linear_probe`** - what frozen correction encoders know about a
//!   task they never saw
//!
//! ```bash
//! cargo run --release --example synth_world
//! cargo run --release --example compare_objectives -- --help
//! ```
//!
//! The same machinery ships as a thin CLI (`relm synth/train/correct/eval/
//! sweep/probe/suite`); see [`cli`].

pub mod cli;
pub mod decode;
pub mod eval;
pub mod experiments;
pub mod net;
pub mod rng;
pub mod synth;
pub mod template;
pub mod text;
pub mod train;
