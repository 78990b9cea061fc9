//! Instance-level and cluster-level contrastive objectives, and the
//! nearest-neighbour pseudo-clusters that supervise the latter.

mod loss;
mod pseudo;

pub use loss::{
    ccl_loss, ccl_loss_value, half_pairing, icl_from_similarity, icl_loss, icl_loss_value,
    validate_pairing, CclOptions, CclPool,
};
pub use pseudo::{build_pseudo_labels, write_assignment_tsv, PseudoLabels, ViewAssignment};

#[cfg(test)]
mod tests;
