"""Post-run invariant audit over a RunTrace.

Every check here re-derives its verdict from trace records alone, with
purpose-built logic kept independent of the runtime modules it audits:
grants are replayed with a plain dict, the shipment state machine is a
four-line table, ordering is a counter per channel.  An empty report
means the run upheld every property.

Checks: per-channel ordered delivery; proof-of-postage provenance
against finalized sender headers; round-robin routing fairness;
registry capacity; pool-stage access control on every authored
extrinsic; shipment state-machine soundness; finalized-chain uniqueness;
and message timeliness (bounded by the measured finality lag).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field


@dataclass
class AuditReport:
    violations: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, check: str, **detail) -> None:
        self.violations.append({"check": check, **detail})


def _events(trace, kind):
    return [e for e in trace.events if e["event"] == kind]


def check_ordering(trace, report: AuditReport) -> None:
    """Applied seq numbers per channel are exactly 1..k."""
    applied = defaultdict(list)
    for event in _events(trace, "para_authored"):
        for channel, seq in event.get("inbound", []):
            applied[channel].append(seq)
    for channel, seqs in sorted(applied.items()):
        expected = list(range(1, len(seqs) + 1))
        if seqs != expected:
            report.add(
                "ordering",
                channel=channel,
                first_bad=next(
                    (i for i, (a, b) in enumerate(zip(seqs, expected)) if a != b), len(seqs)
                ),
                applied=seqs[:20],
            )
    report.stats["applied_per_channel"] = {c: len(s) for c, s in sorted(applied.items())}


def _finalized_hashes(trace) -> set[str]:
    return {e["hash"] for e in _events(trace, "relay_finalized")}


def _finalized_sender_headers(trace) -> dict[tuple[int, int], str]:
    """(para, number) -> outbound_root for receipts included in finalized
    relay blocks."""
    finalized = _finalized_hashes(trace)
    headers: dict[tuple[int, int], str] = {}
    for event in _events(trace, "relay_authored"):
        if event["hash"] not in finalized:
            continue
        for para, number, outbound_root in event.get("included", []):
            headers[(para, number)] = outbound_root
    return headers


def check_provenance(trace, report: AuditReport) -> None:
    """Every delivered entry's postage root is the outbound root of a
    finalized sender header."""
    headers = _finalized_sender_headers(trace)
    delivered = _events(trace, "entry_delivered")
    for event in delivered:
        key = (event["origin_para"], event["origin_block"])
        root = headers.get(key)
        if root is None:
            report.add("provenance", channel=event["channel"], seq=event["seq"], reason="origin header not finalized", origin=list(key))
        elif root != event["postage_root"]:
            report.add("provenance", channel=event["channel"], seq=event["seq"], reason="postage root mismatch", origin=list(key))
    report.stats["delivered_entries"] = len(delivered)


def check_fairness(trace, report: AuditReport) -> None:
    """Within each relay block, channels that still had pending messages
    receive shares differing by at most one."""
    for event in _events(trace, "relay_authored"):
        pending = event.get("pending_before", {})
        if not pending:
            continue
        shares: dict[str, int] = {c: 0 for c in pending}
        for channel, _seq in event.get("routed", []):
            shares[channel] = shares.get(channel, 0) + 1
        starved = {
            c: n for c, n in shares.items() if pending.get(c, 0) > n  # still had more to give
        }
        if not starved:
            continue
        max_share = max(shares.values())
        for channel, share in starved.items():
            if max_share - share > 1:
                report.add(
                    "fairness",
                    relay_block=event["number"],
                    channel=channel,
                    share=share,
                    max_share=max_share,
                    pending=pending,
                )


def check_capacity(trace, report: AuditReport) -> None:
    """registered parachains + 1 <= validator count at every point,
    replayed from genesis plus registry churn on validator 0's view."""
    validators = trace.header["topology"]["validators"]
    count = len(trace.header["topology"]["orgs"])
    if count + 1 > validators:
        report.add("capacity", at="genesis", registered=count, validators=validators)
    for event in trace.events:
        if event["event"] != "relay_event" or event.get("node") != "val:0":
            continue
        name = event.get("relay_kind")
        if name == "para_registered":
            count += 1
            if count + 1 > validators:
                report.add("capacity", at=event["tick"], registered=count, validators=validators)
        elif name == "para_deregistered":
            count -= 1
    report.stats["final_registered"] = count


def _authorized(grants: dict, admins: set, signer: str, pallet: str, call: str, row: dict) -> bool:
    """Independent restatement of pool admission."""
    if signer in admins:
        return True
    if pallet == "rbac" and call in ("assign_role", "revoke_role"):
        change = row.get("role_change")
        if change is None:
            return False
        _, target_pallet, _ = change
        if target_pallet == "rbac":
            return False  # admins only, handled above
        return (signer, target_pallet, "Manage") in grants
    if (signer, pallet, "Execute") in grants or (signer, pallet, "Manage") in grants:
        return True
    return False


def check_rbac(trace, report: AuditReport) -> None:
    """No authored extrinsic lacks access under the registry state at its
    inclusion point, replayed from genesis grants plus role changes."""
    grants_by_para: dict[int, set] = {}
    admins_by_para: dict[int, set] = {}
    for org, info in trace.header.get("genesis", {}).items():
        para = info["para_id"]
        admins_by_para[para] = set(info["admins"])
        grants_by_para[para] = {
            (acct, pallet, perm) for acct, pallet, perm in info["grants"]
        }
    checked = 0
    for event in _events(trace, "para_authored"):
        para = event["para"]
        grants = grants_by_para.setdefault(para, set())
        admins = admins_by_para.setdefault(para, set())
        for row in event.get("extrinsics", []):
            checked += 1
            signer, pallet, call = row["signer"], row["pallet"], row["call"]
            if not _authorized(grants, admins, signer, pallet, call, row):
                report.add(
                    "rbac",
                    para=para,
                    block=event["number"],
                    signer=signer[:16],
                    pallet=pallet,
                    call=call,
                )
            change = row.get("role_change")
            if change is not None:
                key = (change[0], change[1], change[2])
                if call == "assign_role":
                    grants.add(key)
                else:
                    grants.discard(key)
    report.stats["extrinsics_checked"] = checked


_CONTINUATIONS = {
    "Pending": {"Pickup": "InTransit"},
    "InTransit": {"Scan": "InTransit", "Deliver": "Delivered"},
    "Delivered": {},
}
_STATUS_NAMES = {0: "Pending", 1: "InTransit", 2: "Delivered"}


def check_state_machine(trace, report: AuditReport) -> None:
    """Per shipment per chain: event kinds follow Pickup Scan* Deliver?
    from Pending, or Scan* Deliver? when born via handoff."""
    status: dict[tuple[int, str], str] = {}
    handoff_births: dict[tuple[str, int], tuple[str, int]] = {}
    for event in _events(trace, "entry_delivered"):
        if event.get("shipment"):
            receiver = int(event["channel"].split("->")[1])
            status[(receiver, event["shipment"])] = _STATUS_NAMES.get(
                event.get("origin_status", 1), "InTransit"
            )
    for event in _events(trace, "para_authored"):
        para = event["para"]
        for row in event.get("extrinsics", []):
            shipment_row = row.get("shipment")
            if shipment_row is not None:
                status.setdefault((para, shipment_row[0]), "Pending")
            track = row.get("track")
            if track is not None:
                shipment_id, kind = track
                current = status.get((para, shipment_id))
                if current is None:
                    report.add("state_machine", para=para, shipment=shipment_id, reason="event before registration", kind=kind)
                    continue
                next_status = _CONTINUATIONS[current].get(kind)
                if next_status is None:
                    report.add("state_machine", para=para, shipment=shipment_id, reason=f"{kind} while {current}")
                    continue
                status[(para, shipment_id)] = next_status
    report.stats["shipments_tracked"] = len(status)


def check_finality_safety(trace, report: AuditReport) -> None:
    """No two distinct relay blocks finalized at one height."""
    by_height: dict[int, set[str]] = defaultdict(set)
    for event in _events(trace, "relay_finalized"):
        by_height[event["number"]].add(event["hash"])
    for height, hashes in sorted(by_height.items()):
        if len(hashes) > 1:
            report.add("finality_safety", height=height, hashes=sorted(hashes))
    report.stats["finalized_heights"] = len(by_height)


def check_timeliness(trace, report: AuditReport, require_all_applied: bool = False) -> None:
    """Measure delivery lag in relay blocks; flag unapplied messages when
    the run promises lossless delivery."""
    sent = defaultdict(int)
    for event in _events(trace, "msg_sent"):
        sent[event["channel"]] += 1
    applied = defaultdict(int)
    applied_ticks: dict[tuple[str, int], int] = {}
    for event in _events(trace, "para_authored"):
        for channel, seq in event.get("inbound", []):
            applied[channel] += 1
            applied_ticks[(channel, seq)] = event["tick"]
    outbound_ticks: dict[tuple[str, int], int] = {}
    for event in _events(trace, "para_authored"):
        for channel, seq in event.get("outbound", []):
            outbound_ticks[(channel, seq)] = event["tick"]
    # relay cadence: height -> authoring tick
    height_ticks = sorted(
        (e["number"], e["tick"]) for e in _events(trace, "relay_authored")
    )

    def height_at(tick: int) -> int:
        height = 0
        for number, at in height_ticks:
            if at <= tick:
                height = max(height, number)
        return height

    finality_lags = []
    authored_at = {e["hash"]: e["number"] for e in _events(trace, "relay_authored")}
    for event in _events(trace, "relay_finalized"):
        number = authored_at.get(event["hash"])
        if number is not None:
            finality_lags.append(height_at(event["tick"]) - number)
    max_finality_lag = max(finality_lags, default=0)

    routed_heights: dict[tuple[str, int], int] = {}
    for event in _events(trace, "relay_authored"):
        for channel, seq in event.get("routed", []):
            routed_heights.setdefault((channel, seq), event["number"])

    # from routing to application: wait for the routing block's finality,
    # then the receiver's next parablock (one slot, plus alignment)
    post_route_lags = []
    end_to_end_lags = []
    for key, apply_tick in applied_ticks.items():
        routed_height = routed_heights.get(key)
        if routed_height is not None:
            post_route_lags.append(height_at(apply_tick) - routed_height)
        sent_tick = outbound_ticks.get(key)
        if sent_tick is not None:
            end_to_end_lags.append(height_at(apply_tick) - height_at(sent_tick))
    max_post_route = max(post_route_lags, default=0)
    max_lag = max(end_to_end_lags, default=0)
    bound = max_finality_lag + 2
    if post_route_lags and max_post_route > bound:
        report.add(
            "timeliness",
            max_post_route_lag=max_post_route,
            bound=bound,
            finality_lag=max_finality_lag,
        )
    # end to end adds the sender side: inclusion wait, its finality wait,
    # the routing block itself, and slot alignment
    end_bound = 2 * max_finality_lag + 6
    if end_to_end_lags and max_lag > end_bound:
        report.add(
            "timeliness_end_to_end",
            max_lag=max_lag,
            bound=end_bound,
            finality_lag=max_finality_lag,
        )
    if require_all_applied:
        for channel, n_sent in sorted(sent.items()):
            if applied.get(channel, 0) < n_sent:
                report.add(
                    "liveness",
                    channel=channel,
                    sent=n_sent,
                    applied=applied.get(channel, 0),
                )
    report.stats["max_delivery_lag_blocks"] = max_lag
    report.stats["max_post_route_lag_blocks"] = max_post_route
    report.stats["max_finality_lag_blocks"] = max_finality_lag


def check_corruption_outcome(trace, report: AuditReport) -> None:
    """A forced-inclusion fault must end in a dispute overturn (or it is
    a safety breach worth flagging)."""
    corrupt_submissions = [
        e for e in _events(trace, "candidate_submitted") if e.get("corrupt")
    ]
    if not corrupt_submissions:
        return
    overturns = [
        e
        for e in trace.events
        if e["event"] == "relay_event" and e.get("relay_kind") == "dispute_overturned"
    ]
    corrupt_included = set()
    for event in _events(trace, "relay_authored"):
        for para, number, _root in event.get("included", []):
            for sub in corrupt_submissions:
                if sub["para"] == para and sub["number"] == number:
                    corrupt_included.add((para, number))
    if corrupt_included and not overturns:
        report.add(
            "dispute",
            reason="corrupt candidate included but never overturned",
            included=sorted(corrupt_included),
        )
    report.stats["corrupt_included"] = len(corrupt_included)
    report.stats["dispute_overturns"] = len(overturns)


def audit(trace, require_all_applied: bool = False) -> AuditReport:
    """Evaluate every auditable invariant; empty violations == pass."""
    report = AuditReport()
    check_ordering(trace, report)
    check_provenance(trace, report)
    check_fairness(trace, report)
    check_capacity(trace, report)
    check_rbac(trace, report)
    check_state_machine(trace, report)
    check_finality_safety(trace, report)
    check_timeliness(trace, report, require_all_applied=require_all_applied)
    check_corruption_outcome(trace, report)
    return report
