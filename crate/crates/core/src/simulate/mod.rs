//! Seeded Brownian paths and forward integration.

pub mod bundle;
pub mod forward;
pub mod panel;
pub mod remainder;

pub use bundle::{generate_paths, PathBundle};
pub use forward::{
    direction_trace, perturbation_trace, shifted_trace, simulate_first_variation,
    simulate_fundamental, simulate_second_variation, simulate_state, simulate_state_trace,
    y1_from_fundamental, y1_via_representation, ForwardProcesses, Fundamental, StatePath,
};
pub use panel::{
    read_binary, write_binary, write_csv, BinaryHeader, FieldShape, Panel, PanelField,
};
pub use remainder::{remainder_orders, RemainderReport};
