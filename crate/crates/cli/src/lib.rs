//! Command-line front end: CSV ingestion, estimation pipelines and JSON reports.

pub mod error;
pub mod ingest;
pub mod report;
pub mod run;

pub use error::{CliError, CliResult};
pub use ingest::{ingest_csv, read_csv, write_csv, ColumnMap, Dataset, Schema};
pub use report::Report;
pub use run::{main_with_args, Cli};
