//! Server layout (sockets, physical cores, hyperthreads), allocation
//! state, and neighbor classification.
//!
//! HT numbering is slot-major within a core: a core's sibling HTs sit at
//! adjacent server-local ids, so with two HTs per core the sibling of HT
//! `j` is `j ^ 1`. Socket `s` of a server owns the contiguous id range
//! `[s * cores_per_socket * hts_per_core, (s + 1) * ...)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Identifier of a placed service instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyError {
    NoServers,
    ZeroDimension { server_id: usize, field: &'static str },
    DuplicateServerId { server_id: usize },
    NonDenseServerIds { expected: usize, got: usize },
    UnknownServer { server_id: usize },
    HtOutOfBounds { server_id: usize, ht_id: usize },
    SocketOutOfBounds { server_id: usize, socket_idx: usize },
    HtOccupied { server_id: usize, ht_id: usize },
    CrossSocketBind,
    EmptyBind,
    UnknownInstance(InstanceId),
    InstanceAlreadyPlaced(InstanceId),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoServers => write!(f, "topology must list at least one server"),
            Self::ZeroDimension { server_id, field } => {
                write!(f, "server {server_id}: {field} must be >= 1")
            }
            Self::DuplicateServerId { server_id } => {
                write!(f, "duplicate server_id {server_id}")
            }
            Self::NonDenseServerIds { expected, got } => {
                write!(f, "server ids must be dense from 0: expected {expected}, got {got}")
            }
            Self::UnknownServer { server_id } => write!(f, "unknown server {server_id}"),
            Self::HtOutOfBounds { server_id, ht_id } => {
                write!(f, "ht {ht_id} out of bounds on server {server_id}")
            }
            Self::SocketOutOfBounds { server_id, socket_idx } => {
                write!(f, "socket {socket_idx} out of bounds on server {server_id}")
            }
            Self::HtOccupied { server_id, ht_id } => {
                write!(f, "ht {ht_id} on server {server_id} is already occupied")
            }
            Self::CrossSocketBind => write!(f, "bind set must stay within a single socket"),
            Self::EmptyBind => write!(f, "bind set must contain at least one HT"),
            Self::UnknownInstance(id) => write!(f, "instance {id} is not placed"),
            Self::InstanceAlreadyPlaced(id) => write!(f, "instance {id} is already placed"),
        }
    }
}

impl core::error::Error for TopologyError {}

/// Physical dimensions of one server.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ServerTopology {
    pub server_id: usize,
    /// Categorical CPU identity; heterogeneity enters the models through
    /// this label only.
    pub cpu_model: String,
    pub sockets: usize,
    pub cores_per_socket: usize,
    pub hts_per_core: usize,
}

impl ServerTopology {
    pub fn total_hts(&self) -> usize {
        self.sockets * self.cores_per_socket * self.hts_per_core
    }

    pub fn hts_per_socket(&self) -> usize {
        self.cores_per_socket * self.hts_per_core
    }

    /// Server-local id of the HT at (socket, core, slot).
    pub fn ht_id(&self, socket_idx: usize, core_idx: usize, slot_idx: usize) -> usize {
        ((socket_idx * self.cores_per_socket) + core_idx) * self.hts_per_core + slot_idx
    }

    pub fn socket_of(&self, ht_id: usize) -> usize {
        ht_id / self.hts_per_socket()
    }

    /// Socket-local core index of an HT.
    pub fn core_of(&self, ht_id: usize) -> usize {
        (ht_id / self.hts_per_core) % self.cores_per_socket
    }

    pub fn slot_of(&self, ht_id: usize) -> usize {
        ht_id % self.hts_per_core
    }

    /// Server-local ids of the other HTs on the same physical core.
    pub fn siblings_of(&self, ht_id: usize) -> impl Iterator<Item = usize> + '_ {
        let base = (ht_id / self.hts_per_core) * self.hts_per_core;
        (base..base + self.hts_per_core).filter(move |&j| j != ht_id)
    }

    pub fn ht_ref(&self, ht_id: usize) -> Result<HTRef, TopologyError> {
        if ht_id >= self.total_hts() {
            return Err(TopologyError::HtOutOfBounds { server_id: self.server_id, ht_id });
        }
        Ok(HTRef {
            server_id: self.server_id,
            socket_idx: self.socket_of(ht_id),
            core_idx: self.core_of(ht_id),
            slot_idx: self.slot_of(ht_id),
        })
    }
}

/// Whole-cluster physical layout.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterTopology {
    servers: Vec<ServerTopology>,
}

impl ClusterTopology {
    /// Validates dimensions and id density.
    pub fn new(servers: Vec<ServerTopology>) -> Result<Self, TopologyError> {
        if servers.is_empty() {
            return Err(TopologyError::NoServers);
        }
        for (idx, s) in servers.iter().enumerate() {
            if s.sockets == 0 {
                return Err(TopologyError::ZeroDimension { server_id: s.server_id, field: "sockets" });
            }
            if s.cores_per_socket == 0 {
                return Err(TopologyError::ZeroDimension {
                    server_id: s.server_id,
                    field: "cores_per_socket",
                });
            }
            if s.hts_per_core == 0 {
                return Err(TopologyError::ZeroDimension {
                    server_id: s.server_id,
                    field: "hts_per_core",
                });
            }
            if servers.iter().filter(|o| o.server_id == s.server_id).count() > 1 {
                return Err(TopologyError::DuplicateServerId { server_id: s.server_id });
            }
            if s.server_id != idx {
                return Err(TopologyError::NonDenseServerIds { expected: idx, got: s.server_id });
            }
        }
        Ok(Self { servers })
    }

    pub fn servers(&self) -> &[ServerTopology] {
        &self.servers
    }

    pub fn server(&self, server_id: usize) -> Result<&ServerTopology, TopologyError> {
        self.servers.get(server_id).ok_or(TopologyError::UnknownServer { server_id })
    }

    pub fn total_hts(&self) -> usize {
        self.servers.iter().map(|s| s.total_hts()).sum()
    }

    /// Distinct CPU model labels, sorted.
    pub fn cpu_models(&self) -> Vec<String> {
        let mut models: Vec<String> = self.servers.iter().map(|s| s.cpu_model.clone()).collect();
        models.sort();
        models.dedup();
        models
    }
}

/// Fully-qualified reference to one hyperthread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HTRef {
    pub server_id: usize,
    pub socket_idx: usize,
    /// Socket-local core index.
    pub core_idx: usize,
    /// Core-local slot index.
    pub slot_idx: usize,
}

impl HTRef {
    /// Server-local id under the canonical slot-major numbering.
    pub fn ht_id(&self, server: &ServerTopology) -> usize {
        server.ht_id(self.socket_idx, self.core_idx, self.slot_idx)
    }

    fn validate(&self, topo: &ClusterTopology) -> Result<(), TopologyError> {
        let server = topo.server(self.server_id)?;
        if self.socket_idx >= server.sockets
            || self.core_idx >= server.cores_per_socket
            || self.slot_idx >= server.hts_per_core
        {
            return Err(TopologyError::HtOutOfBounds {
                server_id: self.server_id,
                ht_id: self.ht_id(server),
            });
        }
        Ok(())
    }
}

/// Relationship between two hyperthreads, by depth of shared hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborClass {
    /// The same hyperthread.
    SameHt,
    /// SC: same physical core, sharing execution units and L1/L2.
    SharingCore,
    /// SS: same socket, different core, sharing LLC and memory bandwidth.
    SharingSocket,
    /// OS: same server, other socket; negligible CPU coupling.
    OppositeSocket,
    DifferentServer,
}

/// Classifies the relationship between two HTs. Symmetric and total.
pub fn classify_neighbors(
    topo: &ClusterTopology,
    a: &HTRef,
    b: &HTRef,
) -> Result<NeighborClass, TopologyError> {
    a.validate(topo)?;
    b.validate(topo)?;
    if a == b {
        return Ok(NeighborClass::SameHt);
    }
    if a.server_id != b.server_id {
        return Ok(NeighborClass::DifferentServer);
    }
    if a.socket_idx != b.socket_idx {
        return Ok(NeighborClass::OppositeSocket);
    }
    if a.core_idx != b.core_idx {
        return Ok(NeighborClass::SharingSocket);
    }
    Ok(NeighborClass::SharingCore)
}

/// Occupancy of every HT in the cluster plus the reverse instance index.
///
/// Mutations are single-threaded per simulation episode; read-only
/// queries may run concurrently on a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationState {
    /// `occupants[server_id][ht_id]`
    occupants: Vec<Vec<Option<InstanceId>>>,
    placements: BTreeMap<InstanceId, Placement>,
}

/// Where one instance lives. All HTs lie within a single socket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub server_id: usize,
    pub socket_idx: usize,
    /// Server-local ht ids, sorted ascending.
    pub ht_ids: Vec<usize>,
}

impl AllocationState {
    pub fn new(topo: &ClusterTopology) -> Self {
        Self {
            occupants: topo.servers().iter().map(|s| vec![None; s.total_hts()]).collect(),
            placements: BTreeMap::new(),
        }
    }

    pub fn occupant(&self, server_id: usize, ht_id: usize) -> Option<InstanceId> {
        self.occupants.get(server_id).and_then(|s| s.get(ht_id)).copied().flatten()
    }

    pub fn placements(&self) -> &BTreeMap<InstanceId, Placement> {
        &self.placements
    }

    pub fn placement(&self, instance: InstanceId) -> Option<&Placement> {
        self.placements.get(&instance)
    }

    /// Count of unoccupied HTs on one server.
    pub fn idle_count(&self, server_id: usize) -> usize {
        self.occupants[server_id].iter().filter(|o| o.is_none()).count()
    }

    /// Count of unoccupied HTs in one socket.
    pub fn idle_count_in_socket(&self, server: &ServerTopology, socket_idx: usize) -> usize {
        let per = server.hts_per_socket();
        let base = socket_idx * per;
        self.occupants[server.server_id][base..base + per]
            .iter()
            .filter(|o| o.is_none())
            .count()
    }

    /// Strictly increasing ids of the unoccupied HTs in one socket.
    pub fn idle_hts(
        &self,
        topo: &ClusterTopology,
        server_id: usize,
        socket_idx: usize,
    ) -> Result<Vec<usize>, TopologyError> {
        let server = topo.server(server_id)?;
        if socket_idx >= server.sockets {
            return Err(TopologyError::SocketOutOfBounds { server_id, socket_idx });
        }
        let per = server.hts_per_socket();
        let base = socket_idx * per;
        Ok((base..base + per).filter(|&j| self.occupants[server_id][j].is_none()).collect())
    }

    /// Assigns `instance` to the given HTs. The set must be nonempty,
    /// idle, and confined to a single socket of a single server.
    pub fn bind(
        &mut self,
        topo: &ClusterTopology,
        instance: InstanceId,
        hts: &[HTRef],
    ) -> Result<(), TopologyError> {
        if hts.is_empty() {
            return Err(TopologyError::EmptyBind);
        }
        if self.placements.contains_key(&instance) {
            return Err(TopologyError::InstanceAlreadyPlaced(instance));
        }
        let first = &hts[0];
        first.validate(topo)?;
        let server = topo.server(first.server_id)?;
        let mut ht_ids = Vec::with_capacity(hts.len());
        for ht in hts {
            ht.validate(topo)?;
            if ht.server_id != first.server_id || ht.socket_idx != first.socket_idx {
                return Err(TopologyError::CrossSocketBind);
            }
            let id = ht.ht_id(server);
            if self.occupants[ht.server_id][id].is_some() || ht_ids.contains(&id) {
                return Err(TopologyError::HtOccupied { server_id: ht.server_id, ht_id: id });
            }
            ht_ids.push(id);
        }
        ht_ids.sort_unstable();
        for &id in &ht_ids {
            self.occupants[first.server_id][id] = Some(instance);
        }
        self.placements.insert(
            instance,
            Placement { server_id: first.server_id, socket_idx: first.socket_idx, ht_ids },
        );
        Ok(())
    }

    /// Convenience form of [`bind`](Self::bind) taking server-local ids.
    pub fn bind_ids(
        &mut self,
        topo: &ClusterTopology,
        instance: InstanceId,
        server_id: usize,
        ht_ids: &[usize],
    ) -> Result<(), TopologyError> {
        let server = topo.server(server_id)?;
        let refs: Vec<HTRef> = ht_ids
            .iter()
            .map(|&id| server.ht_ref(id))
            .collect::<Result<_, _>>()?;
        self.bind(topo, instance, &refs)
    }

    /// Removes an instance; inverse of [`bind`](Self::bind).
    pub fn release(&mut self, instance: InstanceId) -> Result<(), TopologyError> {
        let placement =
            self.placements.remove(&instance).ok_or(TopologyError::UnknownInstance(instance))?;
        for &id in &placement.ht_ids {
            self.occupants[placement.server_id][id] = None;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> ServerTopology {
        ServerTopology {
            server_id: 0,
            cpu_model: String::from("cpu-a"),
            sockets: 2,
            cores_per_socket: 2,
            hts_per_core: 2,
        }
    }

    fn topo_one_server() -> ClusterTopology {
        ClusterTopology::new(vec![two_by_two()]).unwrap()
    }

    #[test]
    fn canonical_ht_numbering() {
        let topo = topo_one_server();
        let s = topo.server(0).unwrap();
        assert_eq!(s.total_hts(), 8);
        // Socket 0 owns ids 0..4.
        for id in 0..4 {
            assert_eq!(s.socket_of(id), 0);
        }
        for id in 4..8 {
            assert_eq!(s.socket_of(id), 1);
        }
        assert_eq!(s.ht_id(1, 0, 1), 5);
    }

    #[test]
    fn two_identical_servers() {
        let mut b = two_by_two();
        b.server_id = 1;
        let topo = ClusterTopology::new(vec![two_by_two(), b]).unwrap();
        assert_eq!(topo.total_hts(), 16);
        assert_eq!(topo.server(1).unwrap().total_hts(), 8);
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut s = two_by_two();
        s.cores_per_socket = 0;
        assert!(matches!(
            ClusterTopology::new(vec![s]),
            Err(TopologyError::ZeroDimension { field: "cores_per_socket", .. })
        ));
    }

    #[test]
    fn duplicate_server_ids_rejected() {
        let err = ClusterTopology::new(vec![two_by_two(), two_by_two()]).unwrap_err();
        assert!(matches!(
            err,
            TopologyError::DuplicateServerId { server_id: 0 }
        ));
    }

    #[test]
    fn ht_id_round_trip() {
        let topo = topo_one_server();
        let s = topo.server(0).unwrap();
        for id in 0..s.total_hts() {
            let r = s.ht_ref(id).unwrap();
            assert_eq!(r.ht_id(s), id);
        }
    }

    #[test]
    fn neighbor_classes_on_eight_ht_server() {
        let topo = topo_one_server();
        let s = topo.server(0).unwrap();
        let r = |id: usize| s.ht_ref(id).unwrap();
        // Same core.
        assert_eq!(classify_neighbors(&topo, &r(0), &r(1)).unwrap(), NeighborClass::SharingCore);
        // Same socket, other core.
        assert_eq!(classify_neighbors(&topo, &r(0), &r(2)).unwrap(), NeighborClass::SharingSocket);
        // Other socket.
        assert_eq!(classify_neighbors(&topo, &r(0), &r(4)).unwrap(), NeighborClass::OppositeSocket);
        assert_eq!(classify_neighbors(&topo, &r(3), &r(3)).unwrap(), NeighborClass::SameHt);
    }

    #[test]
    fn neighbor_classification_symmetric_and_total() {
        let topo = topo_one_server();
        let s = topo.server(0).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let ra = s.ht_ref(a).unwrap();
                let rb = s.ht_ref(b).unwrap();
                let ab = classify_neighbors(&topo, &ra, &rb).unwrap();
                let ba = classify_neighbors(&topo, &rb, &ra).unwrap();
                assert_eq!(ab, ba, "asymmetric for ({a},{b})");
            }
        }
    }

    #[test]
    fn classify_rejects_out_of_bounds() {
        let topo = topo_one_server();
        let bad = HTRef { server_id: 0, socket_idx: 2, core_idx: 0, slot_idx: 0 };
        let ok = topo.server(0).unwrap().ht_ref(0).unwrap();
        assert!(classify_neighbors(&topo, &bad, &ok).is_err());
    }

    #[test]
    fn idle_hts_tracks_occupancy() {
        let topo = topo_one_server();
        let mut state = AllocationState::new(&topo);
        assert_eq!(state.idle_hts(&topo, 0, 0).unwrap(), vec![0, 1, 2, 3]);
        state.bind_ids(&topo, InstanceId(1), 0, &[1]).unwrap();
        assert_eq!(state.idle_hts(&topo, 0, 0).unwrap(), vec![0, 2, 3]);
        state.bind_ids(&topo, InstanceId(2), 0, &[0]).unwrap();
        state.bind_ids(&topo, InstanceId(3), 0, &[2, 3]).unwrap();
        assert_eq!(state.idle_hts(&topo, 0, 0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn bind_release_round_trip() {
        let topo = topo_one_server();
        let before = AllocationState::new(&topo);
        let mut state = before.clone();
        state.bind_ids(&topo, InstanceId(1), 0, &[0, 1]).unwrap();
        state.release(InstanceId(1)).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn double_bind_rejected() {
        let topo = topo_one_server();
        let mut state = AllocationState::new(&topo);
        state.bind_ids(&topo, InstanceId(1), 0, &[1]).unwrap();
        let err = state.bind_ids(&topo, InstanceId(2), 0, &[1]).unwrap_err();
        assert!(matches!(err, TopologyError::HtOccupied { ht_id: 1, .. }));
    }

    #[test]
    fn cross_socket_bind_rejected() {
        let topo = topo_one_server();
        let mut state = AllocationState::new(&topo);
        // hts 3 and 4 sit on different sockets of this 2x2x2 server.
        let err = state.bind_ids(&topo, InstanceId(3), 0, &[3, 4]).unwrap_err();
        assert_eq!(err, TopologyError::CrossSocketBind);
    }

    #[test]
    fn release_unknown_instance_rejected() {
        let topo = topo_one_server();
        let mut state = AllocationState::new(&topo);
        assert!(matches!(
            state.release(InstanceId(9)),
            Err(TopologyError::UnknownInstance(InstanceId(9)))
        ));
    }
}
