//! Fixed-step simulation engine: message generation, TTL expiry, mobility,
//! contact management, offer evaluation, transfers, and the wired PoP uplink.
//!
//! Every step runs the same sub-phases in a fixed order over nodes and links
//! in a fixed order, so a run is a pure function of (scenario, seed).

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::geo::{self, GeoError, Point, RoadGraph, VertexId};
use crate::metrics::{EventKind, EventLog, EventRecord};
use crate::mobility::{self, MobilityError, MovementModel, MovementState};
use crate::net::{self, ContactLink, LinkProfile, TransferJob};
use crate::rng;
use crate::routing::{
    self, Buffer, BufferEntry, Message, MessageId, NodeId, NodeView, Rejection, Role,
};
use crate::scenario::{MapSource, ScenarioConfig, ScenarioError, SNAP_LIMIT_M};

const ZIGBEE: usize = 0;
const ITSG5: usize = 1;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error("{role} placement ({x}, {y}) is {dist:.1} m from the nearest road vertex (limit {limit} m)")]
    PlacementOffMap { role: &'static str, x: f64, y: f64, dist: f64, limit: f64 },
    #[error("bus route {index} names vertex {vertex}, but the map has {count} vertices")]
    BadRoute { index: usize, vertex: u32, count: usize },
}

struct Node {
    role: Role,
    buffer: Buffer,
    model: MovementModel,
    state: MovementState,
    ifaces: Vec<usize>,
    rng: ChaCha12Rng,
    /// Active links to PoPs; lets routing prefer the infrastructure hop.
    pop_links: u32,
}

/// Node pair that could ever form a link, with its shared profiles.
struct CandidatePair {
    a: u32,
    b: u32,
    shared: Vec<(usize, f64)>,
}

pub struct World {
    cfg: ScenarioConfig,
    graph: RoadGraph,
    profiles: [LinkProfile; 2],
    nodes: Vec<Node>,
    positions: Vec<Point>,
    moved: Vec<bool>,
    pairs: Vec<CandidatePair>,
    links: BTreeMap<(NodeId, NodeId), ContactLink>,
    delivered: BTreeSet<MessageId>,
    events: Vec<EventRecord>,
    /// Step index of each generation round, ascending.
    gen_steps: Vec<u64>,
    gen_ptr: usize,
    /// Buffer version of each PoP at its last wired-forward pass.
    wired_versions: Vec<u64>,
    next_message_id: MessageId,
    completed_steps: u64,
    total_steps: u64,
    dt: f64,
    pop_range: (u32, u32),
    sensor_range: (u32, u32),
    bus_range: (u32, u32),
    car_range: (u32, u32),
}

fn mk_node(
    id: u32,
    role: Role,
    model: MovementModel,
    ifaces: Vec<usize>,
    buffer_bytes: u64,
    graph: &RoadGraph,
    seed: u64,
) -> Result<Node, BuildError> {
    let mut node_rng = rng::stream_rng(seed, id as u64);
    let state = mobility::init_state(&model, graph, &mut node_rng)?;
    Ok(Node {
        role,
        buffer: Buffer::new(buffer_bytes),
        model,
        state,
        ifaces,
        rng: node_rng,
        pop_links: 0,
    })
}

impl World {
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self, BuildError> {
        cfg.validate()?;
        let graph = match &cfg.map {
            MapSource::Grid { rows, cols, spacing } => {
                geo::generate_grid_map(*rows, *cols, *spacing)?
            }
            MapSource::Text(text) => geo::load_map(text)?,
            MapSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| {
                    ScenarioError::Io { path: path.clone(), source }
                })?;
                geo::load_map(&text)?
            }
        };
        let profiles = [cfg.radio.zigbee.clone(), cfg.radio.itsg5.clone()];

        let snap = |role: &'static str, p: Point| -> Result<Point, BuildError> {
            let q = graph.position(graph.nearest_vertex(p));
            let dist = p.distance(q);
            if dist > SNAP_LIMIT_M {
                Err(BuildError::PlacementOffMap { role, x: p.x, y: p.y, dist, limit: SNAP_LIMIT_M })
            } else {
                Ok(q)
            }
        };

        let mut nodes = Vec::new();
        nodes.push(mk_node(
            0,
            Role::Server,
            MovementModel::Stationary { at: graph.position(VertexId(0)) },
            vec![],
            0,
            &graph,
            seed,
        )?);

        let pop_start = nodes.len() as u32;
        for p in &cfg.pops.positions {
            let at = snap("PoP", *p)?;
            nodes.push(mk_node(
                nodes.len() as u32,
                Role::Pop,
                MovementModel::Stationary { at },
                vec![ITSG5],
                cfg.pops.buffer_bytes,
                &graph,
                seed,
            )?);
        }
        let pop_end = nodes.len() as u32;

        let sensor_start = nodes.len() as u32;
        for p in &cfg.sensors.positions {
            let at = snap("sensor", *p)?;
            nodes.push(mk_node(
                nodes.len() as u32,
                Role::Sensor,
                MovementModel::Stationary { at },
                vec![ZIGBEE],
                cfg.sensors.buffer_bytes,
                &graph,
                seed,
            )?);
        }
        let sensor_end = nodes.len() as u32;

        let bus_start = nodes.len() as u32;
        if cfg.buses.per_route > 0 {
            for (index, route) in cfg.buses.routes.iter().enumerate() {
                let stops: Vec<VertexId> = route
                    .iter()
                    .map(|&v| {
                        if (v as usize) < graph.vertex_count() {
                            Ok(VertexId(v))
                        } else {
                            Err(BuildError::BadRoute {
                                index,
                                vertex: v,
                                count: graph.vertex_count(),
                            })
                        }
                    })
                    .collect::<Result<_, _>>()?;
                for k in 0..cfg.buses.per_route {
                    // odd-numbered buses run the loop in reverse
                    let stops = if k % 2 == 1 {
                        stops.iter().rev().copied().collect()
                    } else {
                        stops.clone()
                    };
                    nodes.push(mk_node(
                        nodes.len() as u32,
                        Role::Bus,
                        MovementModel::FixedRoute {
                            stops,
                            speed_min: cfg.buses.speed_min_ms,
                            speed_max: cfg.buses.speed_max_ms,
                            pause_min: cfg.buses.pause_min_s,
                            pause_max: cfg.buses.pause_max_s,
                        },
                        vec![ZIGBEE, ITSG5],
                        cfg.buses.buffer_bytes,
                        &graph,
                        seed,
                    )?);
                }
            }
        }
        let bus_end = nodes.len() as u32;

        let car_start = nodes.len() as u32;
        for _ in 0..cfg.cars.count {
            nodes.push(mk_node(
                nodes.len() as u32,
                Role::Car,
                MovementModel::MapRandomWaypoint {
                    speed_min: cfg.cars.speed_min_ms,
                    speed_max: cfg.cars.speed_max_ms,
                    pause_min: cfg.cars.pause_min_s,
                    pause_max: cfg.cars.pause_max_s,
                },
                vec![ZIGBEE, ITSG5],
                cfg.cars.buffer_bytes,
                &graph,
                seed,
            )?);
        }
        let car_end = nodes.len() as u32;

        let positions: Vec<Point> = nodes.iter().map(|n| n.state.position).collect();

        // Pairs that can never touch are dropped now; stationary pairs that
        // are already in range become permanent links instead.
        let mut pairs = Vec::new();
        let mut links = BTreeMap::new();
        for ai in 0..nodes.len() {
            for bi in ai + 1..nodes.len() {
                let shared = net::shared_profiles(&profiles, &nodes[ai].ifaces, &nodes[bi].ifaces);
                if shared.is_empty() {
                    continue;
                }
                let both_still = matches!(nodes[ai].model, MovementModel::Stationary { .. })
                    && matches!(nodes[bi].model, MovementModel::Stationary { .. });
                if both_still {
                    let d2 = positions[ai].distance_sq(positions[bi]);
                    if let Some(profile) = net::select_profile(&shared, d2) {
                        let key = (NodeId(ai as u32), NodeId(bi as u32));
                        links.insert(key, ContactLink::new(key.0, key.1, profile, 0.0));
                    }
                } else {
                    pairs.push(CandidatePair { a: ai as u32, b: bi as u32, shared });
                }
            }
        }
        let link_keys: Vec<(NodeId, NodeId)> = links.keys().copied().collect();
        for (a, b) in link_keys {
            if nodes[a.0 as usize].role == Role::Pop {
                nodes[b.0 as usize].pop_links += 1;
            }
            if nodes[b.0 as usize].role == Role::Pop {
                nodes[a.0 as usize].pop_links += 1;
            }
        }

        let dt = cfg.sim.step_dt_s;
        let total_steps = ((cfg.sim.duration_s / dt) - 1e-9).ceil().max(0.0) as u64;
        let mut gen_steps = Vec::new();
        let mut k = 1u64;
        while (k as f64) * cfg.sensors.interval_s < cfg.sensors.window_s {
            let t = cfg.sim.warmup_s + k as f64 * cfg.sensors.interval_s;
            let step = (((t / dt) - 1e-9).ceil() as u64).clamp(1, total_steps.max(1));
            gen_steps.push(step);
            k += 1;
        }

        Ok(World {
            wired_versions: vec![0; (pop_end - pop_start) as usize],
            cfg,
            graph,
            profiles,
            moved: vec![true; nodes.len()],
            nodes,
            positions,
            pairs,
            links,
            delivered: BTreeSet::new(),
            events: Vec::new(),
            gen_steps,
            gen_ptr: 0,
            next_message_id: 1,
            completed_steps: 0,
            total_steps,
            dt,
            pop_range: (pop_start, pop_end),
            sensor_range: (sensor_start, sensor_end),
            bus_range: (bus_start, bus_end),
            car_range: (car_start, car_end),
        })
    }

    pub fn now(&self) -> f64 {
        self.completed_steps as f64 * self.dt
    }

    pub fn finished(&self) -> bool {
        self.completed_steps >= self.total_steps
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn role(&self, n: NodeId) -> Role {
        self.nodes[n.0 as usize].role
    }

    pub fn buffer(&self, n: NodeId) -> &Buffer {
        &self.nodes[n.0 as usize].buffer
    }

    pub fn position(&self, n: NodeId) -> Point {
        self.positions[n.0 as usize]
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn server_id(&self) -> NodeId {
        NodeId(0)
    }

    pub fn pop_ids(&self) -> impl Iterator<Item = NodeId> {
        (self.pop_range.0..self.pop_range.1).map(NodeId)
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = NodeId> {
        (self.sensor_range.0..self.sensor_range.1).map(NodeId)
    }

    pub fn bus_ids(&self) -> impl Iterator<Item = NodeId> {
        (self.bus_range.0..self.bus_range.1).map(NodeId)
    }

    pub fn car_ids(&self) -> impl Iterator<Item = NodeId> {
        (self.car_range.0..self.car_range.1).map(NodeId)
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn queued_transfers(&self) -> usize {
        self.links.values().map(|l| l.queue.len()).sum()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn into_events(self) -> Vec<EventRecord> {
        self.events
    }

    /// Runs one step; false once the configured duration is complete.
    pub fn step(&mut self) -> bool {
        if self.finished() {
            return false;
        }
        let k = self.completed_steps + 1;
        let now = k as f64 * self.dt;

        self.phase_generate(k, now);
        self.phase_expire(now);
        self.phase_move();
        self.phase_contacts(now);
        let order = self.link_order();
        self.phase_offers(&order, now);
        self.phase_transfers(&order, now);
        self.phase_wired(now);

        self.completed_steps = k;
        true
    }

    pub fn run(&mut self) {
        while self.step() {}
    }

    fn log(&mut self, time: f64, kind: EventKind, message: MessageId, from: NodeId, to: Option<NodeId>) {
        self.events.push(EventRecord { time, kind, message, from, to });
    }

    fn phase_generate(&mut self, k: u64, now: f64) {
        while self.gen_ptr < self.gen_steps.len() && self.gen_steps[self.gen_ptr] == k {
            self.gen_ptr += 1;
            for si in self.sensor_range.0..self.sensor_range.1 {
                let id = self.next_message_id;
                self.next_message_id += 1;
                let message = Message {
                    id,
                    origin: NodeId(si),
                    destination: self.server_id(),
                    created_at: now,
                    ttl: self.cfg.sensors.ttl_s,
                    size_bytes: self.cfg.sensors.message_bytes,
                };
                self.log(now, EventKind::Generated, id, NodeId(si), None);
                let entry = BufferEntry::new(message, 1, NodeId(si), now);
                if self.nodes[si as usize].buffer.insert(entry).is_err() {
                    self.log(now, EventKind::RejectedBuffer, id, NodeId(si), None);
                }
            }
        }
    }

    fn phase_expire(&mut self, now: f64) {
        for i in 0..self.nodes.len() {
            let dropped = self.nodes[i].buffer.expire_due(now);
            for e in dropped {
                self.log(now, EventKind::DroppedTtl, e.message.id, NodeId(i as u32), None);
            }
        }
    }

    fn phase_move(&mut self) {
        for i in 0..self.nodes.len() {
            let node = &mut self.nodes[i];
            if matches!(node.model, MovementModel::Stationary { .. }) {
                self.moved[i] = false;
                continue;
            }
            let before = node.state.position;
            mobility::advance(&mut node.state, &node.model, &self.graph, &mut node.rng, self.dt);
            let after = node.state.position;
            let changed =
                before.x.to_bits() != after.x.to_bits() || before.y.to_bits() != after.y.to_bits();
            self.moved[i] = changed;
            if changed {
                self.positions[i] = after;
            }
        }
    }

    fn phase_contacts(&mut self, now: f64) {
        for pi in 0..self.pairs.len() {
            let (a, b) = {
                let p = &self.pairs[pi];
                if !self.moved[p.a as usize] && !self.moved[p.b as usize] {
                    continue;
                }
                (p.a, p.b)
            };
            let d2 = self.positions[a as usize].distance_sq(self.positions[b as usize]);
            let desired = net::select_profile(&self.pairs[pi].shared, d2);
            let key = (NodeId(a), NodeId(b));
            let current = self.links.get(&key).map(|l| l.profile);
            match (current, desired) {
                (None, None) => {}
                (Some(c), Some(d)) if c == d => {}
                (None, Some(d)) => self.link_up(key, d, now),
                (Some(_), None) => self.link_down(key, now),
                (Some(_), Some(d)) => {
                    // profile change tears the contact down and restarts it
                    self.link_down(key, now);
                    self.link_up(key, d, now);
                }
            }
        }
    }

    fn link_up(&mut self, key: (NodeId, NodeId), profile: usize, now: f64) {
        self.links.insert(key, ContactLink::new(key.0, key.1, profile, now));
        let (a, b) = (key.0 .0 as usize, key.1 .0 as usize);
        if self.nodes[a].role == Role::Pop {
            self.nodes[b].pop_links += 1;
        }
        if self.nodes[b].role == Role::Pop {
            self.nodes[a].pop_links += 1;
        }
    }

    fn link_down(&mut self, key: (NodeId, NodeId), now: f64) {
        let mut link = self.links.remove(&key).expect("tearing down a live link");
        for job in link.take_aborted() {
            self.log(now, EventKind::TransferAborted, job.message_id, job.sender, Some(job.receiver));
            routing::on_transfer_released(
                &mut self.nodes[job.sender.0 as usize].buffer,
                job.message_id,
                job.copies,
            );
        }
        for (n, peer) in [(key.0, key.1), (key.1, key.0)] {
            if self.nodes[peer.0 as usize].role == Role::Pop {
                let ni = n.0 as usize;
                self.nodes[ni].pop_links -= 1;
                if self.nodes[ni].pop_links == 0 {
                    // messages held back for the infrastructure hop become
                    // offer-eligible on this node's remaining links
                    for ((la, lb), l) in self.links.iter_mut() {
                        if *la == n || *lb == n {
                            l.needs_full_eval = true;
                        }
                    }
                }
            }
        }
    }

    /// Links in (establishment time, endpoint ids) order for this step.
    fn link_order(&self) -> Vec<(NodeId, NodeId)> {
        let mut keyed: Vec<((u64, u32, u32), (NodeId, NodeId))> = self
            .links
            .iter()
            .map(|(&(a, b), l)| ((l.established_at.to_bits(), a.0, b.0), (a, b)))
            .collect();
        keyed.sort_unstable_by_key(|e| e.0);
        keyed.into_iter().map(|e| e.1).collect()
    }

    fn phase_offers(&mut self, order: &[(NodeId, NodeId)], now: f64) {
        for &key in order {
            let link = &self.links[&key];
            if !link.queue.is_empty() {
                continue;
            }
            let full = link.needs_full_eval;
            let (va, vb) = link.evaluated_versions;
            let established_at = link.established_at;
            for (s, p, last_ver) in [(key.0, key.1, va), (key.1, key.0, vb)] {
                self.eval_direction(key, s, p, last_ver, full, established_at, now);
            }
            let a_ver = self.nodes[key.0 .0 as usize].buffer.version();
            let b_ver = self.nodes[key.1 .0 as usize].buffer.version();
            let link = self.links.get_mut(&key).expect("link persists through offers");
            link.evaluated_versions = (a_ver, b_ver);
            link.needs_full_eval = false;
        }
    }

    fn eval_direction(
        &mut self,
        key: (NodeId, NodeId),
        s: NodeId,
        p: NodeId,
        last_ver: u64,
        full: bool,
        established_at: f64,
        now: f64,
    ) {
        let si = s.0 as usize;
        let pi = p.0 as usize;
        let candidates: Vec<MessageId> = if full {
            self.nodes[si].buffer.ids_by_creation().collect()
        } else {
            self.nodes[si].buffer.ids_since(last_ver)
        };
        if candidates.is_empty() {
            return;
        }
        let policy = self.cfg.policy;
        let offers = {
            let sv = NodeView {
                id: s,
                role: self.nodes[si].role,
                buffer: &self.nodes[si].buffer,
                has_pop_link: self.nodes[si].pop_links > 0,
            };
            let pv = NodeView {
                id: p,
                role: self.nodes[pi].role,
                buffer: &self.nodes[pi].buffer,
                has_pop_link: self.nodes[pi].pop_links > 0,
            };
            routing::offers_on_contact(policy, &sv, &pv, established_at, &candidates)
        };
        if offers.is_empty() {
            return;
        }
        // transfers the receiver would reject right now are not queued at all
        let mut accepted: Vec<(Message, u32)> = Vec::with_capacity(offers.len());
        {
            let pv = NodeView {
                id: p,
                role: self.nodes[pi].role,
                buffer: &self.nodes[pi].buffer,
                has_pop_link: self.nodes[pi].pop_links > 0,
            };
            for o in offers {
                let msg = self.nodes[si].buffer.get(o.message_id).expect("offered id held").message;
                if routing::accept_incoming(&pv, &msg, now).is_ok() {
                    accepted.push((msg, o.copies));
                }
            }
        }
        let reserve = policy.reserves() || self.nodes[si].role == Role::Sensor;
        for (msg, copies) in accepted {
            let bits = (msg.size_bytes * 8) as f64;
            self.links.get_mut(&key).expect("link persists through offers").enqueue(TransferJob {
                message_id: msg.id,
                sender: s,
                receiver: p,
                copies,
                size_bits: bits,
                bits_remaining: bits,
                created_at: msg.created_at,
            });
            self.log(now, EventKind::TransferStarted, msg.id, s, Some(p));
            if reserve {
                if let Some(e) = self.nodes[si].buffer.get_mut(msg.id) {
                    e.reserved += copies;
                }
            }
        }
    }

    fn phase_transfers(&mut self, order: &[(NodeId, NodeId)], now: f64) {
        for &key in order {
            let completed = {
                let link = self.links.get_mut(&key).expect("link persists through transfers");
                if link.queue.is_empty() {
                    continue;
                }
                let rate = self.profiles[link.profile].rate_bps;
                link.advance_transfers(rate, self.dt)
            };
            for job in completed {
                self.commit_transfer(job, now);
            }
        }
    }

    fn commit_transfer(&mut self, job: TransferJob, now: f64) {
        let si = job.sender.0 as usize;
        let ri = job.receiver.0 as usize;
        let policy = self.cfg.policy;
        let Some(entry) = self.nodes[si].buffer.get(job.message_id) else {
            // custody vanished mid-flight (TTL); nothing was handed over
            self.log(now, EventKind::TransferAborted, job.message_id, job.sender, Some(job.receiver));
            return;
        };
        let msg = entry.message;
        let verdict = {
            let rv = NodeView {
                id: job.receiver,
                role: self.nodes[ri].role,
                buffer: &self.nodes[ri].buffer,
                has_pop_link: self.nodes[ri].pop_links > 0,
            };
            routing::accept_incoming(&rv, &msg, now)
        };
        match verdict {
            Ok(()) => {
                self.log(now, EventKind::TransferCompleted, msg.id, job.sender, Some(job.receiver));
                let (sender_role, receiver_role) = (self.nodes[si].role, self.nodes[ri].role);
                routing::on_transfer_complete(
                    policy,
                    sender_role,
                    &mut self.nodes[si].buffer,
                    msg.id,
                    job.copies,
                    receiver_role,
                )
                .expect("custody accounting is consistent");
                if self.nodes[si].buffer.contains(msg.id) {
                    // remaining copies become offer-eligible again
                    self.nodes[si].buffer.reoffer_hint(msg.id);
                }
                let copies = if self.nodes[si].role == Role::Sensor {
                    policy.initial_copies()
                } else if self.nodes[ri].role == Role::Pop {
                    1
                } else {
                    job.copies
                };
                let entry = BufferEntry::new(msg, copies, job.sender, now);
                self.nodes[ri].buffer.insert(entry).expect("acceptance was checked");
            }
            Err(Rejection::Duplicate) => {
                self.log(now, EventKind::TransferCompleted, msg.id, job.sender, Some(job.receiver));
                self.log(now, EventKind::RejectedDuplicate, msg.id, job.sender, Some(job.receiver));
                routing::on_transfer_released(&mut self.nodes[si].buffer, msg.id, job.copies);
            }
            Err(Rejection::BufferFull) => {
                self.log(now, EventKind::TransferCompleted, msg.id, job.sender, Some(job.receiver));
                self.log(now, EventKind::RejectedBuffer, msg.id, job.sender, Some(job.receiver));
                routing::on_transfer_released(&mut self.nodes[si].buffer, msg.id, job.copies);
            }
            Err(Rejection::Expired) | Err(Rejection::NotAccepting) => {
                self.log(now, EventKind::TransferAborted, msg.id, job.sender, Some(job.receiver));
                routing::on_transfer_released(&mut self.nodes[si].buffer, msg.id, job.copies);
            }
        }
    }

    fn phase_wired(&mut self, now: f64) {
        for (slot, pi) in (self.pop_range.0..self.pop_range.1).enumerate() {
            let since = self.wired_versions[slot];
            let pop = NodeId(pi);
            let fresh = self.nodes[pi as usize].buffer.ids_since(since);
            for id in fresh {
                let entry = self.nodes[pi as usize]
                    .buffer
                    .get_mut(id)
                    .expect("ids_since only returns live entries");
                if entry.forwarded_wired {
                    continue;
                }
                entry.forwarded_wired = true;
                let server = self.server_id();
                self.log(now, EventKind::TransferCompleted, id, pop, Some(server));
                if self.delivered.insert(id) {
                    self.log(now, EventKind::Delivered, id, pop, Some(server));
                } else {
                    self.log(now, EventKind::RejectedDuplicate, id, pop, Some(server));
                }
            }
            self.wired_versions[slot] = self.nodes[pi as usize].buffer.version();
        }
    }
}

/// Builds a world, runs it to the end, and returns the event log.
pub fn simulate(cfg: ScenarioConfig, seed: u64) -> Result<EventLog, BuildError> {
    let mut world = World::new(cfg, seed)?;
    world.run();
    Ok(EventLog::new(world.into_events()))
}
