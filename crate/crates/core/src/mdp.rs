//! PRB-allocation MDP: user tuples, resource-bit (Rb) allocations, the seven
//! transfer actions, state encoding and logged transitions.
//!
//! 17 Rbs cover the 50 PRBs of the cell: every Rb is 3 PRBs except the last
//! eMBB Rb, which is 2. Every slice keeps at least one Rb; transfers that
//! would drain a slice below one Rb are masked to no-ops.

use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slice::Slice;

pub const TOTAL_RBS: u8 = 17;
pub const TOTAL_PRBS: u32 = 50;
pub const MAX_USERS: u8 = 10;
pub const N_ACTIONS: usize = 7;
pub const STATE_DIM: usize = 5;

/// The nine user tuples collected in every epoch, as (mMTC, URLLC, eMBB).
pub const COMMON_TUPLES: [UserTuple; 9] = [
    UserTuple::from_counts(0, 1, 2),
    UserTuple::from_counts(0, 2, 2),
    UserTuple::from_counts(1, 1, 2),
    UserTuple::from_counts(1, 1, 4),
    UserTuple::from_counts(1, 2, 1),
    UserTuple::from_counts(1, 2, 3),
    UserTuple::from_counts(1, 2, 5),
    UserTuple::from_counts(1, 3, 4),
    UserTuple::from_counts(3, 2, 3),
];

/// Number of UEs per slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[u8; 3]", try_from = "[u8; 3]")]
pub struct UserTuple {
    pub mmtc: u8,
    pub urllc: u8,
    pub embb: u8,
}

impl UserTuple {
    const fn from_counts(mmtc: u8, urllc: u8, embb: u8) -> Self {
        UserTuple { mmtc, urllc, embb }
    }

    pub fn new(mmtc: u8, urllc: u8, embb: u8) -> Result<Self> {
        let t = UserTuple { mmtc, urllc, embb };
        let total = t.total();
        if total == 0 || total > u32::from(MAX_USERS) {
            return Err(Error::Parameter(format!(
                "user tuple {t} must hold between 1 and {MAX_USERS} UEs"
            )));
        }
        Ok(t)
    }

    pub fn total(&self) -> u32 {
        u32::from(self.mmtc) + u32::from(self.urllc) + u32::from(self.embb)
    }

    pub fn count(&self, slice: Slice) -> u8 {
        self.as_array()[slice.index()]
    }

    pub fn as_array(&self) -> [u8; 3] {
        [self.mmtc, self.urllc, self.embb]
    }

    /// Slice of every UE, in (mMTC…, URLLC…, eMBB…) order.
    pub fn ue_slices(&self) -> Vec<Slice> {
        Slice::ALL
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, usize::from(self.count(s))))
            .collect()
    }

    pub fn is_common(&self) -> bool {
        COMMON_TUPLES.contains(self)
    }
}

impl From<UserTuple> for [u8; 3] {
    fn from(t: UserTuple) -> Self {
        t.as_array()
    }
}

impl TryFrom<[u8; 3]> for UserTuple {
    type Error = Error;

    fn try_from(v: [u8; 3]) -> Result<Self> {
        UserTuple::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for UserTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.mmtc, self.urllc, self.embb)
    }
}

impl std::str::FromStr for UserTuple {
    type Err = Error;

    /// Parses `m,u,e` (parentheses and spaces allowed).
    fn from_str(s: &str) -> Result<Self> {
        let cleaned: String = s.chars().filter(|c| !"() ".contains(*c)).collect();
        let parts: Vec<_> = cleaned.split(',').collect();
        let parse = |p: &str| {
            p.parse::<u8>()
                .map_err(|_| Error::Parameter(format!("bad user tuple `{s}`")))
        };
        match parts.as_slice() {
            [m, u, e] => UserTuple::new(parse(m)?, parse(u)?, parse(e)?),
            _ => Err(Error::Parameter(format!("bad user tuple `{s}`, expected m,u,e"))),
        }
    }
}

/// Every valid user tuple (1 to 10 UEs in total), in lexicographic order.
pub fn all_user_tuples() -> Vec<UserTuple> {
    let mut out = Vec::new();
    for m in 0..=MAX_USERS {
        for u in 0..=MAX_USERS - m {
            for e in 0..=MAX_USERS - m - u {
                if m + u + e > 0 {
                    out.push(UserTuple { mmtc: m, urllc: u, embb: e });
                }
            }
        }
    }
    out
}

/// Rbs held by mMTC and URLLC; eMBB holds the rest of the 17.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RbAllocation {
    mmtc: u8,
    urllc: u8,
}

impl RbAllocation {
    pub fn new(mmtc: u8, urllc: u8) -> Result<Self> {
        if mmtc < 1 || urllc < 1 || u16::from(mmtc) + u16::from(urllc) > u16::from(TOTAL_RBS) - 1 {
            return Err(Error::Parameter(format!(
                "Rb allocation ({mmtc}, {urllc}) must leave every slice at least 1 of {TOTAL_RBS} Rbs"
            )));
        }
        Ok(RbAllocation { mmtc, urllc })
    }

    pub fn mmtc(&self) -> u8 {
        self.mmtc
    }

    pub fn urllc(&self) -> u8 {
        self.urllc
    }

    pub fn embb(&self) -> u8 {
        TOTAL_RBS - self.mmtc - self.urllc
    }

    pub fn get(&self, slice: Slice) -> u8 {
        self.as_array()[slice.index()]
    }

    pub fn as_array(&self) -> [u8; 3] {
        [self.mmtc, self.urllc, self.embb()]
    }

    /// PRBs per slice: 3 per Rb, except the last eMBB Rb which carries 2.
    pub fn prbs(&self) -> [u32; 3] {
        [
            3 * u32::from(self.mmtc),
            3 * u32::from(self.urllc),
            3 * u32::from(self.embb()) - 1,
        ]
    }

    /// From `[mmtc, urllc, embb]` Rbs, if every slice has one and they sum to 17.
    pub fn from_array(rbs: [u8; 3]) -> Option<Self> {
        (rbs.iter().all(|&r| r >= 1) && rbs.iter().map(|&r| u16::from(r)).sum::<u16>() == 17)
            .then_some(RbAllocation {
                mmtc: rbs[0],
                urllc: rbs[1],
            })
    }
}

impl Default for RbAllocation {
    fn default() -> Self {
        RbAllocation { mmtc: 5, urllc: 6 }
    }
}

/// `prbs_of` as a free function.
pub fn prbs_of(rbs: RbAllocation) -> [u32; 3] {
    rbs.prbs()
}

/// Every valid allocation: 120 of them.
pub fn all_allocations() -> Vec<RbAllocation> {
    let mut out = Vec::new();
    for m in 1..TOTAL_RBS {
        for u in 1..TOTAL_RBS - m {
            out.push(RbAllocation { mmtc: m, urllc: u });
        }
    }
    out
}

/// One of the seven Rb transfer actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(u8);

/// (source, destination) of actions 1..=6.
const TRANSFERS: [(Slice, Slice); 6] = [
    (Slice::Mmtc, Slice::Urllc),
    (Slice::Mmtc, Slice::Embb),
    (Slice::Urllc, Slice::Mmtc),
    (Slice::Urllc, Slice::Embb),
    (Slice::Embb, Slice::Mmtc),
    (Slice::Embb, Slice::Urllc),
];

impl Action {
    pub const KEEP: Action = Action(0);

    pub fn new(code: u8) -> Result<Self> {
        if usize::from(code) < N_ACTIONS {
            Ok(Action(code))
        } else {
            Err(Error::Parameter(format!("action code {code} outside 0..{N_ACTIONS}")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..N_ACTIONS as u8).map(Action)
    }

    /// `(from, to)` slices, or `None` for action 0.
    pub fn transfer(self) -> Option<(Slice, Slice)> {
        (self.0 > 0).then(|| TRANSFERS[usize::from(self.0) - 1])
    }

    /// The action moving one Rb from `from` to `to`.
    pub fn moving(from: Slice, to: Slice) -> Option<Action> {
        TRANSFERS
            .iter()
            .position(|&t| t == (from, to))
            .map(|i| Action(i as u8 + 1))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Applies `a`; transfers that would leave a slice with 0 Rbs are no-ops.
pub fn apply_action(rbs: RbAllocation, a: Action) -> RbAllocation {
    let Some((from, to)) = a.transfer() else {
        return rbs;
    };
    let mut arr = rbs.as_array();
    if arr[from.index()] <= 1 {
        return rbs;
    }
    arr[from.index()] -= 1;
    arr[to.index()] += 1;
    RbAllocation::from_array(arr).unwrap_or(rbs)
}

/// Bitmask over the seven action codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const ALL: ActionSet = ActionSet((1 << N_ACTIONS) - 1);

    pub fn from_actions(actions: impl IntoIterator<Item = Action>) -> Self {
        ActionSet(actions.into_iter().fold(0, |m, a| m | (1 << a.0)))
    }

    pub fn contains(&self, a: Action) -> bool {
        self.0 & (1 << a.0) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        Action::all().filter(|a| self.contains(*a))
    }

    pub fn bits(&self) -> u8 {
        self.0
    }
}

/// Action 0 plus every transfer that changes the allocation.
pub fn valid_actions_for(rbs: RbAllocation) -> ActionSet {
    ActionSet::from_actions(Action::all().filter(|&a| a == Action::KEEP || apply_action(rbs, a) != rbs))
}

/// MDP state: the user tuple and the current Rb allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    pub users: UserTuple,
    pub rbs: RbAllocation,
}

impl State {
    pub fn new(users: UserTuple, rbs: RbAllocation) -> Self {
        State { users, rbs }
    }

    pub fn step(&self, a: Action) -> State {
        State {
            users: self.users,
            rbs: apply_action(self.rbs, a),
        }
    }

    /// Raw `[m, u, e, rb_m, rb_u]`.
    pub fn raw(&self) -> [u8; 5] {
        let u = self.users.as_array();
        [u[0], u[1], u[2], self.rbs.mmtc, self.rbs.urllc]
    }

    pub fn from_raw(raw: [u8; 5]) -> Result<Self> {
        Ok(State {
            users: UserTuple::new(raw[0], raw[1], raw[2])?,
            rbs: RbAllocation::new(raw[3], raw[4])?,
        })
    }
}

/// Users scaled by 10 and Rbs by 17, all in [0, 1].
pub fn encode_state(s: &State) -> [f64; STATE_DIM] {
    let [m, u, e, rm, ru] = s.raw().map(f64::from);
    let users = f64::from(MAX_USERS);
    let rbs = f64::from(TOTAL_RBS);
    [m / users, u / users, e / users, rm / rbs, ru / rbs]
}

/// What the learning agents need from a state: an encoding, the executable
/// action set, and identity for tabular lookup.
pub trait MdpState: Clone + Eq + Ord + Hash + fmt::Debug + Send + Sync {
    fn features(&self) -> [f64; STATE_DIM];
    fn valid_actions(&self) -> ActionSet;
}

impl MdpState for State {
    fn features(&self) -> [f64; STATE_DIM] {
        encode_state(self)
    }

    fn valid_actions(&self) -> ActionSet {
        valid_actions_for(self.rbs)
    }
}

/// Where a transition came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionMeta {
    pub epoch: u32,
    pub trial: u32,
    pub period: u32,
}

impl TransitionMeta {
    /// Key identifying the trial across epochs.
    pub fn trial_key(&self) -> (u32, u32) {
        (self.epoch, self.trial)
    }
}

/// One logged `(s, a, r, s')` sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S = State> {
    pub s: S,
    pub a: Action,
    pub r: f64,
    pub sp: S,
    pub meta: TransitionMeta,
}

#[derive(Serialize, Deserialize)]
struct TransitionRecord {
    s: [u8; 5],
    a: u8,
    r: f64,
    sp: [u8; 5],
    epoch: u32,
    tuple: [u8; 3],
    trial: u32,
    period: u32,
}

impl Serialize for Transition<State> {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        TransitionRecord {
            s: self.s.raw(),
            a: self.a.code(),
            r: self.r,
            sp: self.sp.raw(),
            epoch: self.meta.epoch,
            tuple: self.s.users.as_array(),
            trial: self.meta.trial,
            period: self.meta.period,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Transition<State> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = TransitionRecord::deserialize(de)?;
        let s = State::from_raw(rec.s).map_err(D::Error::custom)?;
        let sp = State::from_raw(rec.sp).map_err(D::Error::custom)?;
        if rec.tuple != s.users.as_array() {
            return Err(D::Error::custom("`tuple` disagrees with the users in `s`"));
        }
        Ok(Transition {
            s,
            a: Action::new(rec.a).map_err(D::Error::custom)?,
            r: rec.r,
            sp,
            meta: TransitionMeta {
                epoch: rec.epoch,
                trial: rec.trial,
                period: rec.period,
            },
        })
    }
}

impl Transition<State> {
    /// `s'.users == s.users`, `s'.rbs == apply_action(s.rbs, a)` and `r ∈ [0, 1]`.
    pub fn is_consistent(&self) -> bool {
        self.sp == self.s.step(self.a) && (0.0..=1.0).contains(&self.r)
    }
}

/// Writes transitions as JSON lines.
pub fn write_transitions<W: std::io::Write>(transitions: &[Transition], mut w: W) -> Result<()> {
    for t in transitions {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_transitions<R: std::io::BufRead>(r: R) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn read_transitions_file(path: &std::path::Path) -> Result<Vec<Transition>> {
    let f = std::fs::File::open(path)?;
    read_transitions(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Json(j) => Error::format(path, j),
        other => other,
    })
}
