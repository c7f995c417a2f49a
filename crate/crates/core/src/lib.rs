pub mod authz;
pub mod credentials;
pub mod gateway;
pub mod http;
pub mod model;
pub mod runtime;
pub mod sandbox;
pub mod transform;
