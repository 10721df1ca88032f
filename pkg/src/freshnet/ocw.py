"""Off-chain worker: bridges the outside world into chain state.

The worker runs outside the state-transition function after each
imported block.  It may read chain state and an external sensor feed,
but its only write path is signed extrinsics submitted through the
ordinary pool; it also appends a status report to its report sink.
Worker failures are logged to the report and never affect block import
or production.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from freshnet.core.codec import canonical_encode
from freshnet.core.hashing import hash_blob
from freshnet.core.keys import Keypair
from freshnet.pallets import (
    SensorReading,
    ShipmentStatus,
    SubmitReadingArgs,
    list_shipments,
)
from freshnet.core.extrinsic import sign_extrinsic
from freshnet.parachain import Parachain

logger = logging.getLogger(__name__)

# feed(shipment_id, tick) -> SensorReading | None
SensorFeed = Callable[[str, int], "SensorReading | None"]


def simulated_feed(seed: int) -> SensorFeed:
    """Deterministic pseudo-sensor: readings derive from (seed, id, tick)."""

    def feed(shipment_id: str, tick: int) -> SensorReading:
        digest = hash_blob(b"%d/%s/%d" % (seed, shipment_id.encode(), tick))
        temperature = int.from_bytes(digest[0:2], "little") % 3000 - 500  # -5.00..25.00 C
        humidity = int.from_bytes(digest[2:4], "little") % 1001
        return SensorReading(
            temperature_centi_celsius=temperature,
            humidity_permille=humidity,
            captured_at=tick,
        )

    return feed


@dataclass
class OffchainWorker:
    keypair: Keypair
    feed: SensorFeed
    reports: list[dict] = field(default_factory=list)

    def run(self, chain: Parachain, tick: int) -> list:
        """Inspect InTransit shipments, submit one reading each.

        Returns the extrinsics that entered the pool.  Exceptions from
        the feed or submission are reported, never raised.
        """
        submitted = []
        report = {"tick": tick, "block": chain.head.number, "checked": 0, "submitted": 0, "errors": []}
        try:
            shipments = [
                s
                for s in list_shipments(chain.state)
                if s.status == ShipmentStatus.IN_TRANSIT and not s.handed_off
            ]
            report["checked"] = len(shipments)
            for shipment in shipments:
                try:
                    reading = self.feed(shipment.shipment_id, tick)
                    if reading is None:
                        continue
                    args = canonical_encode(
                        SubmitReadingArgs(shipment.shipment_id, reading, "sensor-gateway")
                    )
                    nonce = chain.pool.expected_nonce(chain.state, self.keypair.account)
                    xt = sign_extrinsic(self.keypair, "sensing", "submit_reading", args, nonce)
                    status = chain.submit_extrinsic(xt)
                    if status.accepted:
                        submitted.append(xt)
                        report["submitted"] += 1
                    else:
                        report["errors"].append(f"{shipment.shipment_id}: {status.reason}")
                except Exception as exc:  # per-shipment isolation
                    report["errors"].append(f"{shipment.shipment_id}: {exc}")
        except Exception as exc:  # whole-run isolation
            logger.warning("off-chain worker failed: %s", exc)
            report["errors"].append(str(exc))
        self.reports.append(report)
        return submitted
