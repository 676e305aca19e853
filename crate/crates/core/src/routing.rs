//! Store-carry-forward routing: message buffers, the four vehicle policies,
//! and the sensor pickup behavior.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub type MessageId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Server,
    Pop,
    Sensor,
    Bus,
    Car,
}

impl Role {
    pub fn is_vehicle(self) -> bool {
        matches!(self, Role::Bus | Role::Car)
    }
    /// PoPs and the server drain messages out of the vehicular network.
    pub fn is_gateway(self) -> bool {
        matches!(self, Role::Pop | Role::Server)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub origin: NodeId,
    pub destination: NodeId,
    pub created_at: f64,
    pub ttl: f64,
    pub size_bytes: u64,
}

impl Message {
    pub fn expires_at(&self) -> f64 {
        self.created_at + self.ttl
    }
    pub fn expired(&self, now: f64) -> bool {
        now >= self.expires_at()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SprayMode {
    Standard,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Policy {
    DirectDelivery,
    FirstContact,
    Epidemic,
    SprayAndWait { mode: SprayMode, copies: u32 },
}

impl Policy {
    /// Copy budget a vehicle assigns to a message picked up from a sensor.
    pub fn initial_copies(&self) -> u32 {
        match self {
            Policy::SprayAndWait { copies, .. } => (*copies).max(1),
            _ => 1,
        }
    }

    /// Single-custody policies commit copies to one in-flight transfer at a
    /// time; Epidemic replicates freely and never reserves.
    pub fn reserves(&self) -> bool {
        !matches!(self, Policy::Epidemic)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Policy::DirectDelivery => "direct",
            Policy::FirstContact => "first_contact",
            Policy::Epidemic => "epidemic",
            Policy::SprayAndWait { .. } => "spray_and_wait",
        }
    }
}

/// Copies handed over in one spray transfer: half (rounded up) in binary
/// mode, exactly one in standard mode.
pub fn spray_send_amount(mode: SprayMode, copies: u32) -> u32 {
    match mode {
        SprayMode::Standard => 1,
        SprayMode::Binary => copies.div_ceil(2),
    }
}

#[derive(Debug, Clone)]
pub struct BufferEntry {
    pub message: Message,
    pub copies: u32,
    pub received_from: NodeId,
    pub received_at: f64,
    /// Copies committed to in-flight transfers.
    pub reserved: u32,
    /// Set once a PoP has pushed this message over the wired uplink.
    pub forwarded_wired: bool,
}

impl BufferEntry {
    pub fn new(message: Message, copies: u32, received_from: NodeId, received_at: f64) -> Self {
        Self { message, copies, received_from, received_at, reserved: 0, forwarded_wired: false }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BufferError {
    #[error("message {0} already buffered")]
    Duplicate(MessageId),
    #[error("buffer full: need {need} bytes, {free} free")]
    NoSpace { need: u64, free: u64 },
}

/// Per-node message store with capacity accounting, expiry ordering, and a
/// version counter that advances on every change visible to routing.
#[derive(Debug, Clone)]
pub struct Buffer {
    capacity: u64,
    used: u64,
    entries: BTreeMap<MessageId, BufferEntry>,
    by_creation: BTreeSet<(u64, MessageId)>,
    by_expiry: BTreeSet<(u64, MessageId)>,
    version: u64,
    /// Additions (and re-offer hints) in version order, for incremental
    /// offer evaluation.
    journal: Vec<(u64, MessageId)>,
}

fn time_key(t: f64) -> u64 {
    debug_assert!(t >= 0.0);
    t.to_bits()
}

impl Buffer {
    pub fn new(capacity: u64) -> Self {
        Self {
            capacity,
            used: 0,
            entries: BTreeMap::new(),
            by_creation: BTreeSet::new(),
            by_expiry: BTreeSet::new(),
            version: 0,
            journal: Vec::new(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }
    pub fn used(&self) -> u64 {
        self.used
    }
    pub fn free(&self) -> u64 {
        self.capacity - self.used
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn version(&self) -> u64 {
        self.version
    }
    pub fn contains(&self, id: MessageId) -> bool {
        self.entries.contains_key(&id)
    }
    pub fn get(&self, id: MessageId) -> Option<&BufferEntry> {
        self.entries.get(&id)
    }

    /// In-place mutation that does not advance the version; callers use this
    /// for accounting fields (reservations, wired-forward marks), never for
    /// anything that creates new offer opportunities.
    pub fn get_mut(&mut self, id: MessageId) -> Option<&mut BufferEntry> {
        self.entries.get_mut(&id)
    }

    pub fn insert(&mut self, entry: BufferEntry) -> Result<(), BufferError> {
        let id = entry.message.id;
        if self.entries.contains_key(&id) {
            return Err(BufferError::Duplicate(id));
        }
        let need = entry.message.size_bytes;
        if need > self.free() {
            return Err(BufferError::NoSpace { need, free: self.free() });
        }
        self.used += need;
        self.by_creation.insert((time_key(entry.message.created_at), id));
        self.by_expiry.insert((time_key(entry.message.expires_at()), id));
        self.entries.insert(id, entry);
        self.version += 1;
        self.journal.push((self.version, id));
        Ok(())
    }

    pub fn remove(&mut self, id: MessageId) -> Option<BufferEntry> {
        let entry = self.entries.remove(&id)?;
        self.used -= entry.message.size_bytes;
        self.by_creation.remove(&(time_key(entry.message.created_at), id));
        self.by_expiry.remove(&(time_key(entry.message.expires_at()), id));
        self.version += 1;
        Some(entry)
    }

    /// Removes and returns every entry whose TTL has run out.
    pub fn expire_due(&mut self, now: f64) -> Vec<BufferEntry> {
        let mut dropped = Vec::new();
        while let Some(&(bits, id)) = self.by_expiry.iter().next() {
            if f64::from_bits(bits) > now {
                break;
            }
            dropped.push(self.remove(id).expect("indexed entry"));
        }
        dropped
    }

    /// Marks `id` as worth offering again (an aborted or rejected transfer
    /// released its reservation).
    pub fn reoffer_hint(&mut self, id: MessageId) {
        if self.entries.contains_key(&id) {
            self.version += 1;
            self.journal.push((self.version, id));
        }
    }

    /// Message ids in (creation time, id) order.
    pub fn ids_by_creation(&self) -> impl Iterator<Item = MessageId> + '_ {
        self.by_creation.iter().map(|&(_, id)| id)
    }

    /// Ids added (or hinted) after `version`, in (creation time, id) order.
    pub fn ids_since(&self, version: u64) -> Vec<MessageId> {
        let start = self.journal.partition_point(|&(v, _)| v <= version);
        let mut ids: Vec<MessageId> = self.journal[start..]
            .iter()
            .filter_map(|&(_, id)| self.entries.get(&id).map(|e| (e.message.created_at, id)))
            .map(|(created, id)| (time_key(created), id))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|(_, id)| id)
            .collect();
        ids.dedup();
        ids
    }

    pub fn entries(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.values()
    }
}

/// What a policy can see of a node while deciding offers.
pub struct NodeView<'a> {
    pub id: NodeId,
    pub role: Role,
    pub buffer: &'a Buffer,
    /// Whether the node currently has any active link to a PoP.
    pub has_pop_link: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offer {
    pub message_id: MessageId,
    pub copies: u32,
}

/// Messages `sender` proposes to push to `peer` over an active link
/// established at `link_established_at`, restricted to `candidates`
/// (pre-sorted by creation time then id).
pub fn offers_on_contact(
    policy: Policy,
    sender: &NodeView,
    peer: &NodeView,
    link_established_at: f64,
    candidates: &[MessageId],
) -> Vec<Offer> {
    if sender.role == Role::Sensor {
        return sensor_offers(sender, peer, candidates);
    }
    if !sender.role.is_vehicle() || peer.role == Role::Sensor {
        return Vec::new();
    }
    let mut out = Vec::new();
    for &id in candidates {
        let entry = match sender.buffer.get(id) {
            Some(e) => e,
            None => continue,
        };
        if policy.reserves() && entry.reserved > 0 {
            continue;
        }
        let offer = match policy {
            Policy::DirectDelivery => {
                if peer.role.is_gateway() {
                    Some(entry.copies)
                } else {
                    None
                }
            }
            Policy::FirstContact => {
                if peer.role.is_gateway() {
                    Some(1)
                } else if sender.has_pop_link {
                    // a PoP is reachable right now; let that link take it
                    None
                } else if entry.received_from == peer.id
                    && link_established_at <= entry.received_at
                {
                    // never bounce straight back during the same contact
                    None
                } else {
                    Some(1)
                }
            }
            Policy::Epidemic => {
                if peer.buffer.contains(id) {
                    None
                } else {
                    Some(1)
                }
            }
            Policy::SprayAndWait { mode, .. } => {
                if peer.role.is_gateway() {
                    Some(entry.copies)
                } else if entry.copies >= 2 && !peer.buffer.contains(id) {
                    Some(spray_send_amount(mode, entry.copies))
                } else {
                    None
                }
            }
        };
        if let Some(copies) = offer {
            out.push(Offer { message_id: id, copies });
        }
    }
    out
}

/// Sensors push every reading to the first in-range vehicle; the reservation
/// made when a transfer is queued keeps later vehicles from double-pickup.
fn sensor_offers(sensor: &NodeView, peer: &NodeView, candidates: &[MessageId]) -> Vec<Offer> {
    if !peer.role.is_vehicle() {
        return Vec::new();
    }
    candidates
        .iter()
        .filter_map(|&id| sensor.buffer.get(id))
        .filter(|e| e.reserved == 0)
        .map(|e| Offer { message_id: e.message.id, copies: e.copies })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Duplicate,
    BufferFull,
    Expired,
    NotAccepting,
}

/// Whether `receiver` would take `message` right now. Rejections are normal
/// outcomes, not errors.
pub fn accept_incoming(receiver: &NodeView, message: &Message, now: f64) -> Result<(), Rejection> {
    if receiver.role == Role::Sensor {
        return Err(Rejection::NotAccepting);
    }
    if message.expired(now) {
        return Err(Rejection::Expired);
    }
    if receiver.buffer.contains(message.id) {
        return Err(Rejection::Duplicate);
    }
    if message.size_bytes > receiver.buffer.free() {
        return Err(Rejection::BufferFull);
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq)]
pub enum CustodyError {
    #[error("sender does not hold message {0}")]
    MissingEntry(MessageId),
    #[error("sent {sent} copies of message {id} but only {held} were held")]
    Overcommit { id: MessageId, sent: u32, held: u32 },
}

/// Sender-side custody update after a completed, accepted transfer.
pub fn on_transfer_complete(
    policy: Policy,
    sender_role: Role,
    sender_buffer: &mut Buffer,
    message_id: MessageId,
    copies_sent: u32,
    peer_role: Role,
) -> Result<(), CustodyError> {
    let entry = sender_buffer
        .get_mut(message_id)
        .ok_or(CustodyError::MissingEntry(message_id))?;
    // gateways and sensor pickups take everything; between vehicles, a
    // single-copy policy moves its one copy wholly, epidemic replicates one
    // copy at a time, and spray-and-wait must keep a copy for itself
    let allowed = if sender_role == Role::Sensor || peer_role.is_gateway() {
        entry.copies
    } else {
        match policy {
            Policy::DirectDelivery | Policy::FirstContact => entry.copies,
            Policy::Epidemic => 1,
            Policy::SprayAndWait { .. } => entry.copies.saturating_sub(1),
        }
    };
    if copies_sent > allowed {
        return Err(CustodyError::Overcommit { id: message_id, sent: copies_sent, held: entry.copies });
    }
    entry.reserved = entry.reserved.saturating_sub(copies_sent);

    if sender_role == Role::Sensor {
        sender_buffer.remove(message_id);
        return Ok(());
    }
    match policy {
        Policy::DirectDelivery | Policy::FirstContact => {
            sender_buffer.remove(message_id);
        }
        Policy::Epidemic => {}
        Policy::SprayAndWait { .. } => {
            if peer_role.is_gateway() {
                sender_buffer.remove(message_id);
            } else {
                let entry = sender_buffer.get_mut(message_id).expect("checked above");
                entry.copies -= copies_sent;
            }
        }
    }
    Ok(())
}

/// Sender-side cleanup after a rejected or aborted transfer: custody is
/// unchanged, the reservation is released, and the message becomes
/// offer-eligible again.
pub fn on_transfer_released(sender_buffer: &mut Buffer, message_id: MessageId, copies: u32) {
    if let Some(entry) = sender_buffer.get_mut(message_id) {
        entry.reserved = entry.reserved.saturating_sub(copies);
        sender_buffer.reoffer_hint(message_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(id: MessageId, created: f64) -> Message {
        Message {
            id,
            origin: NodeId(6),
            destination: NodeId(0),
            created_at: created,
            ttl: 18_000.0,
            size_bytes: 10,
        }
    }

    fn entry(id: MessageId, created: f64, copies: u32) -> BufferEntry {
        BufferEntry::new(msg(id, created), copies, NodeId(6), created)
    }

    fn view<'a>(id: u32, role: Role, buffer: &'a Buffer, has_pop_link: bool) -> NodeView<'a> {
        NodeView { id: NodeId(id), role, buffer, has_pop_link }
    }

    fn all_ids(b: &Buffer) -> Vec<MessageId> {
        b.ids_by_creation().collect()
    }

    #[test]
    fn buffer_accounts_capacity_and_duplicates() {
        let mut b = Buffer::new(25);
        b.insert(entry(1, 0.0, 1)).unwrap();
        b.insert(entry(2, 1.0, 1)).unwrap();
        assert_eq!(b.insert(entry(1, 0.0, 1)), Err(BufferError::Duplicate(1)));
        assert_eq!(
            b.insert(entry(3, 2.0, 1)),
            Err(BufferError::NoSpace { need: 10, free: 5 })
        );
        assert_eq!(b.used(), 20);
        b.remove(1);
        assert_eq!(b.free(), 15);
        b.insert(entry(3, 2.0, 1)).unwrap();
    }

    #[test]
    fn buffer_expires_in_creation_order() {
        let mut b = Buffer::new(1000);
        for (id, t) in [(3u64, 40.0), (1, 10.0), (2, 20.0)] {
            b.insert(entry(id, t, 1)).unwrap();
        }
        assert!(b.expire_due(10.0 + 17_999.0).is_empty());
        let dropped = b.expire_due(20.0 + 18_000.0);
        let ids: Vec<_> = dropped.iter().map(|e| e.message.id).collect();
        assert_eq!(ids, vec![1, 2]);
        assert!(b.contains(3));
    }

    #[test]
    fn journal_reports_additions_since_version() {
        let mut b = Buffer::new(1000);
        b.insert(entry(5, 50.0, 1)).unwrap();
        let v = b.version();
        b.insert(entry(2, 20.0, 1)).unwrap();
        b.insert(entry(9, 90.0, 1)).unwrap();
        assert_eq!(b.ids_since(v), vec![2, 9]);
        assert_eq!(b.ids_since(b.version()), Vec::<MessageId>::new());
        b.reoffer_hint(5);
        assert_eq!(b.ids_since(b.version() - 1), vec![5]);
    }

    #[test]
    fn direct_delivery_offers_gateways_only() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        let peer_buf = Buffer::new(1000);
        let me = view(50, Role::Car, &b, false);
        let other_car = view(51, Role::Car, &peer_buf, false);
        let pop = view(1, Role::Pop, &peer_buf, false);
        assert!(offers_on_contact(Policy::DirectDelivery, &me, &other_car, 0.0, &all_ids(&b)).is_empty());
        let to_pop = offers_on_contact(Policy::DirectDelivery, &me, &pop, 0.0, &all_ids(&b));
        assert_eq!(to_pop, vec![Offer { message_id: 1, copies: 1 }]);
    }

    #[test]
    fn first_contact_relays_and_guards_bounce_back() {
        let mut b = Buffer::new(1000);
        let mut e = entry(1, 0.0, 1);
        e.received_from = NodeId(51);
        e.received_at = 100.0;
        b.insert(e).unwrap();
        let peer_buf = Buffer::new(1000);
        let me = view(50, Role::Car, &b, false);
        let prev_hop = view(51, Role::Car, &peer_buf, false);
        let fresh = view(52, Role::Car, &peer_buf, false);

        // same contact as the receipt: suppressed
        assert!(offers_on_contact(Policy::FirstContact, &me, &prev_hop, 90.0, &all_ids(&b)).is_empty());
        // a later, separate contact with the same node: allowed
        assert_eq!(
            offers_on_contact(Policy::FirstContact, &me, &prev_hop, 150.0, &all_ids(&b)).len(),
            1
        );
        // any other node: relayed
        assert_eq!(offers_on_contact(Policy::FirstContact, &me, &fresh, 90.0, &all_ids(&b)).len(), 1);
        // a live PoP link takes precedence over a car peer
        let me_near_pop = view(50, Role::Car, &b, true);
        assert!(offers_on_contact(Policy::FirstContact, &me_near_pop, &fresh, 90.0, &all_ids(&b)).is_empty());
        let pop = view(1, Role::Pop, &peer_buf, false);
        assert_eq!(offers_on_contact(Policy::FirstContact, &me_near_pop, &pop, 90.0, &all_ids(&b)).len(), 1);
    }

    #[test]
    fn epidemic_offers_summary_vector_difference() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        b.insert(entry(2, 1.0, 1)).unwrap();
        b.insert(entry(3, 2.0, 1)).unwrap();
        let mut peer_buf = Buffer::new(1000);
        peer_buf.insert(entry(2, 1.0, 1)).unwrap();
        let me = view(50, Role::Car, &b, false);
        let peer = view(51, Role::Car, &peer_buf, false);
        let offers = offers_on_contact(Policy::Epidemic, &me, &peer, 0.0, &all_ids(&b));
        let ids: Vec<_> = offers.iter().map(|o| o.message_id).collect();
        assert_eq!(ids, vec![1, 3]);
    }

    #[test]
    fn spray_and_wait_splits_and_waits() {
        let binary = Policy::SprayAndWait { mode: SprayMode::Binary, copies: 6 };
        let standard = Policy::SprayAndWait { mode: SprayMode::Standard, copies: 6 };
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 6)).unwrap();
        let peer_buf = Buffer::new(1000);
        let me = view(50, Role::Car, &b, false);
        let car = view(51, Role::Car, &peer_buf, false);
        let pop = view(1, Role::Pop, &peer_buf, false);

        let o = offers_on_contact(binary, &me, &car, 0.0, &all_ids(&b));
        assert_eq!(o, vec![Offer { message_id: 1, copies: 3 }]);
        let o = offers_on_contact(standard, &me, &car, 0.0, &all_ids(&b));
        assert_eq!(o, vec![Offer { message_id: 1, copies: 1 }]);
        // the whole budget goes to a PoP
        let o = offers_on_contact(binary, &me, &pop, 0.0, &all_ids(&b));
        assert_eq!(o, vec![Offer { message_id: 1, copies: 6 }]);

        // wait phase: one copy left, gateway-only
        let mut wait_buf = Buffer::new(1000);
        wait_buf.insert(entry(2, 0.0, 1)).unwrap();
        let waiting = view(50, Role::Car, &wait_buf, false);
        assert!(offers_on_contact(binary, &waiting, &car, 0.0, &all_ids(&wait_buf)).is_empty());
        assert_eq!(offers_on_contact(binary, &waiting, &pop, 0.0, &all_ids(&wait_buf)).len(), 1);
    }

    #[test]
    fn spray_split_conserves_budget() {
        for n in 1..=10_000u32 {
            let sent = spray_send_amount(SprayMode::Binary, n);
            let kept = n - sent;
            assert_eq!(sent + kept, n);
            assert_eq!(sent, n.div_ceil(2));
            assert_eq!(kept, n / 2);
        }
        assert_eq!(spray_send_amount(SprayMode::Binary, 6), 3);
        assert_eq!(spray_send_amount(SprayMode::Standard, 6), 1);
    }

    #[test]
    fn reserved_entries_are_not_reoffered() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        b.get_mut(1).unwrap().reserved = 1;
        let peer_buf = Buffer::new(1000);
        let me = view(50, Role::Car, &b, false);
        let pop = view(1, Role::Pop, &peer_buf, false);
        assert!(offers_on_contact(Policy::DirectDelivery, &me, &pop, 0.0, &all_ids(&b)).is_empty());
        // epidemic replicates concurrently and ignores reservations
        assert_eq!(offers_on_contact(Policy::Epidemic, &me, &pop, 0.0, &all_ids(&b)).len(), 1);
    }

    #[test]
    fn sensors_offer_vehicles_everything_and_accept_nothing() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        b.insert(entry(2, 1.0, 1)).unwrap();
        let peer_buf = Buffer::new(1000);
        let sensor = view(6, Role::Sensor, &b, false);
        let car = view(50, Role::Car, &peer_buf, false);
        let pop = view(1, Role::Pop, &peer_buf, false);
        assert_eq!(offers_on_contact(Policy::DirectDelivery, &sensor, &car, 0.0, &all_ids(&b)).len(), 2);
        assert!(offers_on_contact(Policy::DirectDelivery, &sensor, &pop, 0.0, &all_ids(&b)).is_empty());
        assert_eq!(
            accept_incoming(&sensor, &msg(9, 0.0), 1.0),
            Err(Rejection::NotAccepting)
        );
    }

    #[test]
    fn vehicles_never_offer_to_sensors() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        let peer_buf = Buffer::new(1000);
        let car = view(50, Role::Car, &b, false);
        let sensor = view(6, Role::Sensor, &peer_buf, false);
        for policy in [
            Policy::DirectDelivery,
            Policy::FirstContact,
            Policy::Epidemic,
            Policy::SprayAndWait { mode: SprayMode::Binary, copies: 6 },
        ] {
            assert!(offers_on_contact(policy, &car, &sensor, 0.0, &all_ids(&b)).is_empty());
        }
    }

    #[test]
    fn accept_rules_cover_duplicate_space_and_ttl() {
        let mut b = Buffer::new(15);
        b.insert(entry(1, 0.0, 1)).unwrap();
        let receiver = view(50, Role::Car, &b, false);
        assert_eq!(accept_incoming(&receiver, &msg(1, 0.0), 1.0), Err(Rejection::Duplicate));
        assert_eq!(accept_incoming(&receiver, &msg(2, 0.0), 1.0), Err(Rejection::BufferFull));
        let empty = Buffer::new(1000);
        let roomy = view(50, Role::Car, &empty, false);
        assert_eq!(accept_incoming(&roomy, &msg(2, 0.0), 18_000.0), Err(Rejection::Expired));
        assert_eq!(accept_incoming(&roomy, &msg(2, 0.0), 17_999.0), Ok(()));
    }

    #[test]
    fn custody_updates_per_policy() {
        let spray = Policy::SprayAndWait { mode: SprayMode::Binary, copies: 6 };

        // first contact erases after relay
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        on_transfer_complete(Policy::FirstContact, Role::Car, &mut b, 1, 1, Role::Car).unwrap();
        assert!(!b.contains(1));

        // epidemic keeps its copy
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        on_transfer_complete(Policy::Epidemic, Role::Car, &mut b, 1, 1, Role::Car).unwrap();
        assert!(b.contains(1));

        // spray: split to a car, flush to a PoP
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 6)).unwrap();
        on_transfer_complete(spray, Role::Car, &mut b, 1, 3, Role::Car).unwrap();
        assert_eq!(b.get(1).unwrap().copies, 3);
        on_transfer_complete(spray, Role::Car, &mut b, 1, 3, Role::Pop).unwrap();
        assert!(!b.contains(1));

        // standard mode keeps the rest of the budget
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 6)).unwrap();
        on_transfer_complete(spray, Role::Car, &mut b, 1, 1, Role::Car).unwrap();
        assert_eq!(b.get(1).unwrap().copies, 5);

        // sensors always erase on pickup
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        on_transfer_complete(Policy::DirectDelivery, Role::Sensor, &mut b, 1, 1, Role::Car).unwrap();
        assert!(!b.contains(1));
    }

    #[test]
    fn custody_overcommit_is_an_error() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 2)).unwrap();
        let err =
            on_transfer_complete(Policy::Epidemic, Role::Car, &mut b, 1, 2, Role::Car).unwrap_err();
        assert_eq!(err, CustodyError::Overcommit { id: 1, sent: 2, held: 2 });
        assert_eq!(
            on_transfer_complete(Policy::Epidemic, Role::Car, &mut b, 9, 1, Role::Car).unwrap_err(),
            CustodyError::MissingEntry(9)
        );
    }

    #[test]
    fn released_transfer_keeps_custody_and_rehints() {
        let mut b = Buffer::new(1000);
        b.insert(entry(1, 0.0, 1)).unwrap();
        b.get_mut(1).unwrap().reserved = 1;
        let v = b.version();
        on_transfer_released(&mut b, 1, 1);
        assert_eq!(b.get(1).unwrap().reserved, 0);
        assert_eq!(b.get(1).unwrap().copies, 1);
        assert_eq!(b.ids_since(v), vec![1]);
    }
}
