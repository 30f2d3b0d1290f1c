//! Cluster memberships for the per-cluster coding rate: co-occurrence
//! thresholding, and self-labeling through a classifier head whose soft
//! predictions are projected onto the equal-partition transport polytope.

mod cooccurrence;
mod head;
mod ipot;
mod membership;

pub use cooccurrence::{build_cooccurrence, sample_memberships, thresholded_memberships, CooccurrenceGraph, Side, Threshold};
pub use head::{classifier_forward, cross_entropy, update_classifier, ClassifierHead, HeadGradients};
pub use ipot::{assignment_cost, ipot_assign, memberships_from_assignments, AssignmentMatrix, IpotConfig};
pub use membership::{Cluster, MembershipMode, MembershipSet};
