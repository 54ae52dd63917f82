pub mod conversation;
pub mod db;
pub mod eval;
pub mod gateway;
pub mod generation;
pub mod io;
pub mod model;
pub mod normalize;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod screening;
pub mod sql;
