//! Parallel runtime: partitioning, the entity directory, the wire format,
//! the EOS barrier and the threaded executor.

mod directory;
mod eos;
mod frame;
mod parallel;
mod partition;
mod region;

pub use directory::{route_message, CommunicationStats, Directory, Move};
pub use eos::{EosMessage, EosTracker};
pub use frame::{decode_body, encode_frame, split_frame, FrameTag, HEADER_LEN};
pub use parallel::{advance_parallel, run_parallel, FaultHook, Jitter};
pub use partition::{geographic_partition, make_partition, Partition, PartitionStrategy};
pub use region::RegionRegistry;
