//! Device stream ingestion: wire parsing, time synchronization, the watch
//! window and close-contact installation.

pub mod cursor;
pub mod process;
pub mod window;
pub mod wire;

pub use cursor::{sync_time, SlotCursor};
pub use process::{detect, process, Detection, Detector, ProcessReport};
pub use window::WatchWindow;
pub use wire::{parse_stream, parse_streams, ParseError, ParseErrorKind, StreamRecord};
