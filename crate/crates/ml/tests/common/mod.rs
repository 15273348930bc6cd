#![allow(dead_code)]

pub mod simdata;
pub mod svm_oracle;
