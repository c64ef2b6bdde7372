//! Contact bookkeeping and the mutual-contacts graph.
//!
//! A host's contacts are the hosts it exchanged at least one flow with inside
//! the retention window. The weight of edge `(i, j)` in the mutual-contacts
//! graph is `|(N(i) ∩ N(j)) \ {i, j}|`.

mod contacts;
mod mcm;

pub use contacts::{
    build_mcm, expire_contacts, mutual_contacts, record_contacts, ContactChanges, ContactMap,
};
pub use mcm::{apply_graph_delta, GraphDelta, MutualContactsGraph};
