//! Vietnamese scene-text toolkit.
//!
//! * [`orthography`] and [`syllable`]: tone extraction, diacritic stripping and
//!   a rule-based syllable parser.
//! * [`phono`]: pairwise phonological features over OCR tokens.
//! * [`diagnostics`]: corpus-level analyses (diacritic collisions, caption/OCR
//!   divergence, OCR error taxonomy, text usage).
//! * [`fusion`]: graph-attention fusion kernels with analytic gradients.
//! * [`metrics`]: BLEU, CIDEr and ROUGE-L with pluggable tokenizers.
//! * [`dataset`]: dataset, OCR sidecar and report I/O.
//! * [`cli`]: the `vitext` command-line front end.

pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod orthography;
pub mod phono;
pub mod syllable;
