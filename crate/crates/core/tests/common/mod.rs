#![allow(dead_code)]

pub mod sql_oracle;
pub mod fixtures;
pub mod criteria;
