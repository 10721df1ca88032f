"""Deterministic discrete-event harness.

Validators, collators, and off-chain workers run as simulated processes
exchanging wire messages under seeded latency, loss, partitions, and
fault injection.  A run is a pure function of (config, topology, faults,
duration): virtual time is integer ticks, all randomness flows from one
seeded generator, and nodes execute in a fixed order, so identical
inputs give byte-identical traces and state digests.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field

from freshnet.core import StateStore, canonical_encode
from freshnet.core.extrinsic import sign_extrinsic
from freshnet.errors import ChainError, ChannelFull, ConfigInvalid
from freshnet.ocw import OffchainWorker, simulated_feed
from freshnet.pallets import (
    EventKind,
    HandoffArgs,
    RegisterProductArgs,
    RegisterShipmentArgs,
    TrackArgs,
)
from freshnet.parachain import (
    GenesisSpec,
    Parachain,
    RelayUpdate,
    RelayUpdateKind,
    build_genesis_state,
)
from freshnet.nodes import BootstrapPara, CollatorNode, ValidatorNode
from freshnet.protocol import WireKind, command_msg
from freshnet.rbac import Permission
from freshnet.relay import CommandKind, RelayCommand, RelayGenesis, SharedConfig
from freshnet.sim.keys import org_keypair, validator_keypair
from freshnet.xcm import ChannelId, StorageMode

from freshnet.parachain import VALIDATION_CODE_HASH


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    latency_ticks: tuple[int, int] = (1, 3)
    drop_probability: float = 0.0
    slot_duration_ticks: int = 10
    scenario: str = ""

    def validate(self) -> None:
        lo, hi = self.latency_ticks
        if not (0 <= lo <= hi):
            raise ConfigInvalid("latency range must satisfy 0 <= min <= max")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigInvalid("drop probability must be within [0, 1]")
        if self.slot_duration_ticks < 1:
            raise ConfigInvalid("slot duration must be >= 1 tick")


@dataclass(frozen=True)
class FaultSpec:
    kind: str  # CrashValidator | Equivocate | Partition | CorruptCandidate | DelayChannel
    target: str  # node id ("val:0", "para:1") or channel label "1->2"
    window: tuple[int, int]

    KINDS = ("CrashValidator", "Equivocate", "Partition", "CorruptCandidate", "DelayChannel")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigInvalid(f"unknown fault kind {self.kind!r}")
        if self.window[0] > self.window[1]:
            raise ConfigInvalid("fault window must be (start <= end)")


@dataclass(frozen=True)
class OrgSpec:
    org_id: str
    extra_grants: tuple[tuple[str, str, str], ...] = ()  # (role-name, pallet, perm)


@dataclass(frozen=True)
class Topology:
    validators: int
    orgs: tuple[OrgSpec, ...]
    channels: tuple[tuple[str, str], ...] = ()  # (sender org, receiver org)
    mode: StorageMode = StorageMode.HRMP
    channel_capacity: int = 16
    max_message_bytes: int = 65536
    routing_per_block: int = 64
    ocw_enabled: bool = False
    ocw_delay_ticks: int = 3

    def validate(self) -> None:
        if self.validators < len(self.orgs) + 1:
            raise ConfigInvalid(
                f"{len(self.orgs)} parachains need >= {len(self.orgs) + 1} validators"
            )


def org_genesis(org: OrgSpec, para_id: int) -> GenesisSpec:
    admin = org_keypair(org.org_id, "admin")
    operator = org_keypair(org.org_id, "operator")
    worker = org_keypair(org.org_id, "worker")
    collator = org_keypair(org.org_id, "collator")
    grants = [
        (operator.account, "products", "Execute"),
        (operator.account, "shipments", "Execute"),
        (operator.account, "tracking", "Execute"),
        (worker.account, "sensing", "Execute"),
        (worker.account, "tracking", "Execute"),
    ]
    for role_name, pallet, perm in org.extra_grants:
        grants.append((org_keypair(org.org_id, role_name).account, pallet, perm))
    return GenesisSpec(
        org_id=org.org_id,
        chain_name=f"{org.org_id}-chain",
        admins=(admin.account,),
        initial_grants=tuple(grants),
        collator=collator.account,
        para_id=para_id,
    )


@dataclass
class TrafficStream:
    channel: ChannelId
    remaining: int
    per_slot: int
    payload_size: int
    sent: int = 0


@dataclass
class RunTrace:
    header: dict
    events: list[dict]
    final: dict

    def to_jsonl(self) -> bytes:
        lines = [json.dumps({"header": self.header}, separators=(",", ":"))]
        lines.extend(json.dumps(e, separators=(",", ":")) for e in self.events)
        lines.append(json.dumps({"final": self.final}, separators=(",", ":")))
        return ("\n".join(lines) + "\n").encode()

    @classmethod
    def from_jsonl(cls, data: bytes) -> "RunTrace":
        lines = [json.loads(line) for line in data.decode().splitlines() if line]
        header = lines[0]["header"]
        final = lines[-1]["final"]
        return cls(header=header, events=lines[1:-1], final=final)

    def digest_summary(self) -> dict:
        return self.final


class Simulation:
    """One deterministic run over a topology with optional faults."""

    def __init__(
        self,
        config: SimConfig,
        topology: Topology,
        faults: list[FaultSpec] = (),
        duration_ticks: int = 600,
        actions: list[dict] = (),
    ):
        config.validate()
        topology.validate()
        for fault in faults:
            fault.validate()
        self.config = config
        self.topology = topology
        self.faults = list(faults)
        self.duration = duration_ticks
        self.actions = list(actions)
        self.rng = random.Random(config.seed)
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.events: list[dict] = []
        self.partitioned: dict[str, tuple[int, int]] = {}  # node -> window
        self.delayed_channels: dict[str, tuple[int, int]] = {}  # label -> window
        self.traffic: list[TrafficStream] = []
        self.pending_action_errors: list[dict] = []

        shared = SharedConfig(
            max_message_bytes=topology.max_message_bytes,
            channel_capacity=topology.channel_capacity,
            slot_duration_ticks=config.slot_duration_ticks,
            mode=topology.mode,
            routing_per_block=topology.routing_per_block,
        )
        relay_genesis = RelayGenesis(
            validators=tuple(validator_keypair(i).account for i in range(topology.validators)),
            config=shared,
        )

        self.org_para: dict[str, int] = {}
        bootstrap: list[BootstrapPara] = []
        genesis_states: dict[int, StateStore] = {}
        for position, org in enumerate(topology.orgs):
            para_id = position + 1
            self.org_para[org.org_id] = para_id
            spec = org_genesis(org, para_id)
            state = build_genesis_state(spec)
            genesis_states[para_id] = state
            bootstrap.append(
                BootstrapPara(
                    org_id=org.org_id,
                    para_id=para_id,
                    genesis_state=state,
                    collator_account=spec.collator,
                )
            )
        bootstrap_channels = [
            ChannelId(self.org_para[s], self.org_para[r]) for s, r in topology.channels
        ]

        self.validators: list[ValidatorNode] = []
        for i in range(topology.validators):
            node_id = f"val:{i}"
            node = ValidatorNode(
                node_id=node_id,
                keypair=validator_keypair(i),
                index=i,
                genesis=relay_genesis,
                bootstrap=bootstrap,
                bootstrap_channels=bootstrap_channels,
                trace=self._tracer(node_id),
            )
            # relay registry next id must continue after bootstrap paras
            node.state.registry.next_para_id = len(topology.orgs) + 1
            self.validators.append(node)

        self.collators: dict[int, CollatorNode] = {}
        for para in bootstrap:
            chain = Parachain(
                genesis_states[para.para_id].copy(),
                collator=org_keypair(para.org_id, "collator"),
            )
            worker = None
            if topology.ocw_enabled:
                worker = OffchainWorker(
                    org_keypair(para.org_id, "worker"), simulated_feed(config.seed)
                )
            node_id = f"para:{para.para_id}"
            node = CollatorNode(
                node_id=node_id,
                chain=chain,
                genesis=relay_genesis,
                worker=worker,
                bootstrap=bootstrap,
                bootstrap_channels=bootstrap_channels,
                trace=self._tracer(node_id),
            )
            node.state.registry.next_para_id = len(topology.orgs) + 1
            # mirror bootstrap facts into chain state via startup inherents
            for org_id, para_id in sorted(self.org_para.items()):
                chain.queue_relay_update(
                    RelayUpdate(
                        kind=RelayUpdateKind.ORG_REGISTERED, org_id=org_id, para_id=para_id
                    )
                )
            for cid in bootstrap_channels:
                if para.para_id in (cid.sender, cid.receiver):
                    chain.queue_relay_update(
                        RelayUpdate(
                            kind=RelayUpdateKind.CHANNEL_OPENED,
                            channel=cid,
                            capacity=shared.channel_capacity,
                            max_message_bytes=shared.max_message_bytes,
                        )
                    )
            self.collators[para.para_id] = node

        self.nodes: dict[str, object] = {}
        for para_id in sorted(self.collators):
            node = self.collators[para_id]
            self.nodes[node.node_id] = node
        for node in self.validators:
            self.nodes[node.node_id] = node
        self.node_order = list(self.nodes)
        self.alive: dict[str, bool] = {node_id: True for node_id in self.nodes}

    # -- plumbing -------------------------------------------------------------

    def _tracer(self, node_id: str):
        def trace(kind: str, **fields):
            record = {"tick": self.now, "node": node_id, "event": kind}
            record.update(fields)
            self.events.append(record)

        return trace

    def _push(self, tick: int, kind: str, data) -> None:
        heapq.heappush(self._heap, (tick, self._seq, kind, data))
        self._seq += 1

    def _emit(self, sender_id: str, outgoings) -> None:
        for dest, message in outgoings:
            if dest is None:
                targets = [n for n in self.node_order if n != sender_id]
            elif dest == "split:even":
                targets = [n for i, n in enumerate(self.node_order) if i % 2 == 0 and n != sender_id]
            elif dest == "split:odd":
                targets = [n for i, n in enumerate(self.node_order) if i % 2 == 1 and n != sender_id]
            else:
                targets = [dest] if dest in self.nodes else []
            for target in targets:
                self._route(sender_id, target, message)

    def _in_partition(self, node_id: str, tick: int) -> bool:
        window = self.partitioned.get(node_id)
        return window is not None and window[0] <= tick < window[1]

    def _route(self, sender: str, dest: str, message) -> None:
        tick = self.now
        latency = self.rng.randint(*self.config.latency_ticks)
        arrival = tick + latency
        # partitions hold traffic crossing the boundary until the window ends
        for node_id, window in self.partitioned.items():
            crosses = (node_id in (sender, dest)) and ((sender == node_id) != (dest == node_id))
            if crosses and window[0] <= tick < window[1]:
                arrival = max(arrival, window[1] + latency)
        if message.kind in (WireKind.FETCH_REQUEST, WireKind.FETCH_RESPONSE):
            label = (message.fetch_request or message.fetch_response).channel.label()
            window = self.delayed_channels.get(label)
            if window is not None and window[0] <= tick < window[1]:
                arrival = max(arrival, window[1] + latency)
        if self.config.drop_probability > 0 and self.rng.random() < self.config.drop_probability:
            self.events.append(
                {"tick": tick, "node": sender, "event": "msg_dropped", "to": dest, "kind": int(message.kind)}
            )
            return
        self._push(arrival, "deliver", (dest, message, sender))

    # -- faults ------------------------------------------------------------------

    def _apply_fault_edges(self) -> None:
        for fault in self.faults:
            start, end = fault.window
            self._push(start, "fault_start", fault)
            self._push(end, "fault_end", fault)

    def _fault_start(self, fault: FaultSpec) -> None:
        self.events.append(
            {"tick": self.now, "node": fault.target, "event": "fault_start", "kind": fault.kind}
        )
        if fault.kind == "CrashValidator":
            self.alive[fault.target] = False
        elif fault.kind == "Partition":
            self.partitioned[fault.target] = fault.window
        elif fault.kind == "Equivocate":
            node = self.nodes.get(fault.target)
            if node is not None and hasattr(node, "equivocate"):
                node.equivocate = True
        elif fault.kind == "CorruptCandidate":
            collator = self.nodes.get(fault.target)
            if collator is not None and hasattr(collator, "corrupt_candidates"):
                collator.corrupt_candidates = True
                # all validators except the watchdog (index 0) attest blindly
                for validator in self.validators[1:]:
                    validator.blind_attest = True
        elif fault.kind == "DelayChannel":
            self.delayed_channels[fault.target] = fault.window

    def _fault_end(self, fault: FaultSpec) -> None:
        self.events.append(
            {"tick": self.now, "node": fault.target, "event": "fault_end", "kind": fault.kind}
        )
        if fault.kind == "CrashValidator":
            self.alive[fault.target] = True
        elif fault.kind == "Partition":
            self.partitioned.pop(fault.target, None)
        elif fault.kind == "Equivocate":
            node = self.nodes.get(fault.target)
            if node is not None and hasattr(node, "equivocate"):
                node.equivocate = False
        elif fault.kind == "CorruptCandidate":
            collator = self.nodes.get(fault.target)
            if collator is not None and hasattr(collator, "corrupt_candidates"):
                collator.corrupt_candidates = False
                collator._corrupt_parent = None
                for validator in self.validators:
                    validator.blind_attest = False
        elif fault.kind == "DelayChannel":
            self.delayed_channels.pop(fault.target, None)

    # -- scenario actions -----------------------------------------------------------

    def _org_chain(self, org_id: str) -> Parachain:
        return self.collators[self.org_para[org_id]].chain

    def _submit(self, org_id: str, signer_role: str, pallet: str, call: str, args) -> None:
        chain = self._org_chain(org_id)
        keypair = org_keypair(org_id, signer_role)
        nonce = chain.pool.expected_nonce(chain.state, keypair.account)
        xt = sign_extrinsic(keypair, pallet, call, canonical_encode(args), nonce)
        status = chain.submit_extrinsic(xt)
        self.events.append(
            {
                "tick": self.now,
                "node": f"para:{chain.para_id}",
                "event": "xt_submitted" if status.accepted else "xt_rejected",
                "signer": keypair.account.hex(),
                "pallet": pallet,
                "call": call,
                "reason": status.reason,
            }
        )

    def _send_command(self, command: RelayCommand) -> None:
        # operator commands enter through validator 0's API and gossip out
        entry = self.validators[0]
        self._emit(entry.node_id, entry.on_message(command_msg(command), "api"))
        message = command_msg(command)
        for other in self.validators[1:]:
            self._route(entry.node_id, other.node_id, message)
        self.events.append(
            {"tick": self.now, "node": entry.node_id, "event": "command_submitted", "kind": command.kind.name}
        )

    def _run_action(self, action: dict) -> None:
        name = action["action"]
        try:
            if name == "register_product":
                self._submit(
                    action["org"],
                    action.get("signer", "operator"),
                    "products",
                    "register_product",
                    RegisterProductArgs(action["id"], action.get("label", ""), ()),
                )
            elif name == "register_shipment":
                self._submit(
                    action["org"],
                    action.get("signer", "operator"),
                    "shipments",
                    "register_shipment",
                    RegisterShipmentArgs(
                        action["id"], tuple(action["products"]), action["dest"]
                    ),
                )
            elif name == "track":
                self._submit(
                    action["org"],
                    action.get("signer", "operator"),
                    "tracking",
                    "track_shipment",
                    TrackArgs(action["id"], EventKind[action["kind"].upper()], action.get("location", "")),
                )
            elif name == "handoff":
                self._submit(
                    action["org"],
                    action.get("signer", "operator"),
                    "shipments",
                    "handoff",
                    HandoffArgs(action["id"]),
                )
            elif name == "assign_role" or name == "revoke_role":
                from freshnet.rbac import RoleChangeArgs

                target = org_keypair(action["org"], action["target"]).account
                self._submit(
                    action["org"],
                    action.get("signer", "admin"),
                    "rbac",
                    name,
                    RoleChangeArgs(target, action["pallet"], Permission.parse(action["perm"])),
                )
            elif name == "traffic":
                for pair in action["channels"]:
                    sender, receiver = pair
                    cid = ChannelId(self.org_para[sender], self.org_para[receiver])
                    self.traffic.append(
                        TrafficStream(
                            channel=cid,
                            remaining=int(action["per_channel"]),
                            per_slot=int(action.get("per_slot", 8)),
                            payload_size=int(action.get("size", 24)),
                        )
                    )
            elif name == "deregister":
                self._send_command(
                    RelayCommand(kind=CommandKind.DEREGISTER_PARA, org_id=action["org"])
                )
            elif name == "register_org":
                org = OrgSpec(org_id=action["org"])
                spec = org_genesis(org, para_id=0)
                state = build_genesis_state(spec)
                self._send_command(
                    RelayCommand(
                        kind=CommandKind.REGISTER_PARA,
                        org_id=action["org"],
                        genesis_state=canonical_encode(state),
                        code_hash=VALIDATION_CODE_HASH,
                        collator=spec.collator,
                    )
                )
            elif name == "open_channel":
                cid = ChannelId(self.org_para[action["from"]], self.org_para[action["to"]])
                self._send_command(RelayCommand(kind=CommandKind.OPEN_CHANNEL, channel=cid))
            elif name == "accept_channel":
                cid = ChannelId(self.org_para[action["from"]], self.org_para[action["to"]])
                self._send_command(RelayCommand(kind=CommandKind.ACCEPT_CHANNEL, channel=cid))
            else:
                raise ConfigInvalid(f"unknown action {name!r}")
        except ChainError as exc:
            self.events.append(
                {"tick": self.now, "node": "sim", "event": "action_failed", "action": name, "reason": exc.code}
            )

    def _drive_traffic(self) -> None:
        for stream in self.traffic:
            if stream.remaining <= 0:
                continue
            collator = self.collators.get(stream.channel.sender)
            if collator is None or not self.alive.get(collator.node_id, False):
                continue
            burst = min(stream.per_slot, stream.remaining)
            for _ in range(burst):
                stream.sent += 1
                payload = b"traffic/%d-%d/%08d/" % (
                    stream.channel.sender,
                    stream.channel.receiver,
                    stream.sent,
                )
                payload += b"x" * max(0, stream.payload_size - len(payload))
                try:
                    collator.chain.send_raw(stream.channel, payload)
                except ChannelFull:
                    stream.sent -= 1
                    self.events.append(
                        {
                            "tick": self.now,
                            "node": collator.node_id,
                            "event": "send_blocked",
                            "channel": stream.channel.label(),
                        }
                    )
                    break
                except ChainError as exc:
                    stream.sent -= 1
                    self.events.append(
                        {
                            "tick": self.now,
                            "node": collator.node_id,
                            "event": "send_failed",
                            "channel": stream.channel.label(),
                            "reason": exc.code,
                        }
                    )
                    break
                stream.remaining -= 1
                self.events.append(
                    {
                        "tick": self.now,
                        "node": collator.node_id,
                        "event": "msg_sent",
                        "channel": stream.channel.label(),
                    }
                )

    # -- the loop -----------------------------------------------------------------

    def run(self) -> RunTrace:
        # same-tick ordering (by push sequence): faults, then actions,
        # then the slot itself
        self._apply_fault_edges()
        for action in self.actions:
            self._push(int(action.get("at", 0)), "action", action)
        slot_ticks = self.config.slot_duration_ticks
        for slot in range(0, self.duration // slot_ticks + 1):
            self._push(slot * slot_ticks, "slot", slot)

        while self._heap:
            tick, _seq, kind, data = heapq.heappop(self._heap)
            if tick > self.duration:
                break
            self.now = tick
            if kind == "slot":
                self._run_slot(data)
            elif kind == "deliver":
                dest, message, sender = data
                if not self.alive.get(dest, False):
                    continue
                if self._in_partition(dest, tick):
                    # arrival inside the window: hold until it lifts
                    self._push(self.partitioned[dest][1], "deliver", data)
                    continue
                node = self.nodes[dest]
                self._emit(dest, node.on_message(message, sender))
            elif kind == "action":
                self._run_action(data)
            elif kind == "worker":
                node = self.nodes.get(data)
                if node is not None and self.alive.get(data, False):
                    node.run_worker(self.now)
            elif kind == "fault_start":
                self._fault_start(data)
            elif kind == "fault_end":
                self._fault_end(data)

        return self._finish()

    def _run_slot(self, slot: int) -> None:
        self._drive_traffic()
        for node_id in self.node_order:
            if not self.alive.get(node_id, False):
                continue
            # partitioned nodes still run; routing holds their traffic
            self._emit(node_id, self.nodes[node_id].on_slot(slot, self.now))
        if self.topology.ocw_enabled:
            for para_id in sorted(self.collators):
                node = self.collators[para_id]
                if self.alive.get(node.node_id, False):
                    self._push(self.now + self.topology.ocw_delay_ticks, "worker", node.node_id)

    def _finish(self) -> RunTrace:
        final = {"paras": {}, "relay": {}}
        for para_id in sorted(self.collators):
            node = self.collators[para_id]
            final["paras"][str(para_id)] = {
                "org": node.chain.org_id,
                "height": node.chain.head.number,
                "state_root": node.chain.state.root().hex(),
                "head_hash": node.chain.head.hash().hex(),
            }
        for node in self.validators:
            final["relay"][node.node_id] = {
                "head": node.relay_head_number,
                "head_hash": node.relay_head_hash().hex(),
                "finalized": node.finality.finalized_head[0] if node.finality.finalized_head else 0,
                "flagged": sorted(node.state.flagged),
            }
        header = {
            "config": {
                "seed": self.config.seed,
                "latency_ticks": list(self.config.latency_ticks),
                "drop_probability": self.config.drop_probability,
                "slot_duration_ticks": self.config.slot_duration_ticks,
                "scenario": self.config.scenario,
            },
            "topology": {
                "validators": self.topology.validators,
                "orgs": [o.org_id for o in self.topology.orgs],
                "org_para": dict(sorted(self.org_para.items())),
                "channels": [list(c) for c in self.topology.channels],
                "mode": self.topology.mode.name,
                "channel_capacity": self.topology.channel_capacity,
                "routing_per_block": self.topology.routing_per_block,
            },
            "faults": [
                {"kind": f.kind, "target": f.target, "window": list(f.window)} for f in self.faults
            ],
            "duration_ticks": self.duration,
            "genesis": {
                org.org_id: {
                    "para_id": self.org_para[org.org_id],
                    "admins": [org_keypair(org.org_id, "admin").account.hex()],
                    "grants": [
                        [acct.hex(), pallet, perm]
                        for acct, pallet, perm in org_genesis(
                            org, self.org_para[org.org_id]
                        ).initial_grants
                    ],
                }
                for org in self.topology.orgs
            },
        }
        return RunTrace(header=header, events=self.events, final=final)


def run(
    config: SimConfig,
    topology: Topology,
    faults: list[FaultSpec] = (),
    duration_ticks: int = 600,
    actions: list[dict] = (),
) -> RunTrace:
    """Build and run a simulation; the result is pure in its arguments."""
    return Simulation(config, topology, faults, duration_ticks, actions).run()
