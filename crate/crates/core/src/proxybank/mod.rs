//! The proxy bank: `K` unit proxies per class, soft multi-proxy class
//! similarity, pseudo-class assignment, per-epoch membership accounting, EM
//! prototypes of support embeddings and re-initialisation of empty proxies.

mod bank;
mod em;

pub(crate) use bank::pseudo_class_from;
pub use bank::{
    Class, ProxyBank, ProxyId, PseudoLabelRule, Similarity, DEFAULT_K, DEFAULT_TEMPERATURE,
};
pub use em::{em_prototypes, EmConfig, EmFit, Prototypes, DEFAULT_M};
