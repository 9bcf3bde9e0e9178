//! Model-level distillation: teachers trained with NLL on paired data,
//! students trained on paired ∪ augmented data with NLL plus a weighted
//! soft-target term against the frozen teacher.

pub mod gradcheck;
pub mod lm;
pub mod loss;
pub mod train;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, Parameterized};
pub use lm::{
    gen_kd, gen_nll, gen_total, gen_total_grad, EncodedPair, LmCheckpoint, LmShape, Role, Vocab,
    WindowLm, BOS, EOS, SEP, UNK,
};
pub use loss::{clamp_prob, match_kd, match_nll, match_total, match_total_grad};
pub use train::{
    build_vocab, train_gen_student, train_gen_teacher, train_match_student, train_match_teacher,
    EpochLog, LmHyper, LossWeights, MatchModel, StudentMode,
};
