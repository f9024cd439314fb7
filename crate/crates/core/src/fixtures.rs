//! Reference models shipped with the crate.

use crate::dsl::{parse_model, ModelFileError};
use crate::model::CompartmentalModel;
use crate::scalar::Scalar;

/// Two compartments with sinusoidal inputs and constant intensities.
pub const HIPPE: &str = include_str!("../models/hippe.model");
/// Resource, producer and consumer with a Gaussian input pulse into the producer.
pub const HALLAM: &str = include_str!("../models/hallam.model");
/// Two-compartment chain `1 → 2` with constant input into 1.
pub const CHAIN: &str = include_str!("../models/chain.model");

pub fn hippe<T: Scalar>() -> Result<CompartmentalModel<T>, ModelFileError> {
    parse_model(HIPPE)
}

pub fn hallam<T: Scalar>() -> Result<CompartmentalModel<T>, ModelFileError> {
    parse_model(HALLAM)
}

pub fn chain<T: Scalar>() -> Result<CompartmentalModel<T>, ModelFileError> {
    parse_model(CHAIN)
}
