//! Environment ingestion and synthesis: OBJ meshes, generated rooms,
//! voxelization and supervoxel aggregation.

mod mesh;
mod room;
mod supervoxel;
mod voxel;

pub use mesh::{box_triangles, load_mesh, parse_obj, TriangleMesh};
pub use room::{generate_room, RoomParams, WallOrient};
pub use supervoxel::{supervoxel_counts, SupervoxelGrid};
pub use voxel::{triangle_box_overlap, voxelize, FreeId, GridDump, VoxelGrid, AXIS_NEIGHBOURS};
