//! Generators and oracles shared by the integration suites.
#![allow(dead_code)]

pub mod codec_gen;
pub mod dba_oracle;
pub mod fast_oracle;

use vpon_dba::codec::AllocId;

pub fn id(v: u16) -> AllocId {
    AllocId::new(v).unwrap()
}
