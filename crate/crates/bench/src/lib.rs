//! Problem setups shared by the criterion benches.

use fwi_core::fixtures::OracleFixture;

/// Inclusion experiment on an `n × n` grid at 3 Hz.
pub fn inclusion(n: usize) -> OracleFixture {
    OracleFixture::inclusion(n, 3.0).expect("valid benchmark setup")
}
