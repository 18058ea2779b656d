//! Bundled RDDL domains and instances.

use crate::rddl::{parse_domain, parse_instance, validate, TypedModel};
use crate::Error;

pub const MINI_WILDFIRE: &str = include_str!("../corpus/mini_wildfire.rddl");
pub const MINI_WILDFIRE_XY: &str = include_str!("../corpus/mini_wildfire_xy.rddl");
pub const MINI_WILDFIRE_2X1: &str = include_str!("../corpus/mini_wildfire_2x1.rddl");
pub const MINI_WILDFIRE_3X1: &str = include_str!("../corpus/mini_wildfire_3x1.rddl");
pub const MINI_WILDFIRE_2X3: &str = include_str!("../corpus/mini_wildfire_2x3.rddl");
pub const MINI_WILDFIRE_XY_2X1: &str = include_str!("../corpus/mini_wildfire_xy_2x1.rddl");
pub const WILDFIRE: &str = include_str!("../corpus/wildfire.rddl");
pub const WILDFIRE_3X3: &str = include_str!("../corpus/wildfire_3x3.rddl");
pub const SYSADMIN_RING: &str = include_str!("../corpus/sysadmin_ring.rddl");
pub const SYSADMIN_RING_3: &str = include_str!("../corpus/sysadmin_ring_3.rddl");
pub const SYSADMIN_RING_4: &str = include_str!("../corpus/sysadmin_ring_4.rddl");
pub const SYSADMIN_RING_5: &str = include_str!("../corpus/sysadmin_ring_5.rddl");
pub const SYSADMIN_RING_8: &str = include_str!("../corpus/sysadmin_ring_8.rddl");
pub const SYSADMIN_RING_10: &str = include_str!("../corpus/sysadmin_ring_10.rddl");

/// Every bundled (domain, instance) pair.
pub const PAIRS: &[(&str, &str)] = &[
    (MINI_WILDFIRE, MINI_WILDFIRE_2X1),
    (MINI_WILDFIRE, MINI_WILDFIRE_3X1),
    (MINI_WILDFIRE, MINI_WILDFIRE_2X3),
    (MINI_WILDFIRE_XY, MINI_WILDFIRE_XY_2X1),
    (WILDFIRE, WILDFIRE_3X3),
    (SYSADMIN_RING, SYSADMIN_RING_3),
    (SYSADMIN_RING, SYSADMIN_RING_4),
    (SYSADMIN_RING, SYSADMIN_RING_5),
    (SYSADMIN_RING, SYSADMIN_RING_8),
    (SYSADMIN_RING, SYSADMIN_RING_10),
];

/// Parse and validate a bundled pair.
pub fn load(domain: &str, instance: &str) -> Result<TypedModel, Error> {
    let d = parse_domain(domain)?;
    let i = parse_instance(instance)?;
    Ok(validate(&d, &i)?)
}
