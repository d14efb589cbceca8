//! Storage-aware learned index structures: layered step and band indexes
//! whose shape is tuned against a latency/bandwidth storage profile.

pub mod builders;
pub mod cost;
pub mod data;
pub mod format;
pub mod model;
pub mod par;
pub mod query;
pub mod storage;
pub mod tuner;

pub use builders::{default_builder_set, outline, BuilderSet, BuilderSpec};
pub use cost::{expected_cost, lookup_cost, step_index_complexity, CostBreakdown, QueryDistribution};
pub use data::{gen_gmm, gen_uniform, load_sosd, to_key_position_set, DatasetSpec};
pub use format::{build_index, BuiltIndex};
pub use model::{validate_design, IndexDesign, Key, KeyPositionSet, LayerDesign, PositionRange};
pub use query::{lookup, LookupResult, PageCache};
pub use storage::{Backend, MemBackend, ResourceId, StorageProfile};
pub use tuner::{airtune, TuneConfig, TuneResult};
