//! Deterministic synthetic multi-view study benchmark. Each study is a bag of
//! small grayscale images; only the two "relevant" view types render the
//! severity signal, and the generator keeps the ground-truth relevance of
//! every instance so attention quality can be audited exactly.

pub mod generate;
pub mod io;
pub mod render;

pub use generate::{generate_bundle, generate_study, DatasetBundle, GeneratorConfig, SyntheticStudy};
pub use io::{load_dataset, save_dataset};
pub use render::{render_instance, ViewType};
