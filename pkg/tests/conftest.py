"""Shared fixtures: deterministic keypairs and a two-org chain setup."""

import pytest

from freshnet.core import Keypair
from freshnet.parachain import GenesisSpec, Parachain, build_genesis_state


def seed_keypair(tag: int) -> Keypair:
    return Keypair.from_seed(bytes([tag]) * 32)


ADMIN = seed_keypair(1)
OPERATOR = seed_keypair(2)
WORKER = seed_keypair(3)
COLLATOR_FARMER = seed_keypair(10)
COLLATOR_PROCESSOR = seed_keypair(11)


def farmer_genesis(para_id: int = 1) -> GenesisSpec:
    return GenesisSpec(
        org_id="farmer-fresh",
        chain_name="farmer-fresh-chain",
        admins=(ADMIN.account,),
        initial_grants=(
            (OPERATOR.account, "products", "Execute"),
            (OPERATOR.account, "shipments", "Execute"),
            (OPERATOR.account, "tracking", "Execute"),
            (WORKER.account, "sensing", "Execute"),
            (WORKER.account, "tracking", "Execute"),
        ),
        collator=COLLATOR_FARMER.account,
        para_id=para_id,
    )


def processor_genesis(para_id: int = 2) -> GenesisSpec:
    return GenesisSpec(
        org_id="processor-pure",
        chain_name="processor-pure-chain",
        admins=(ADMIN.account,),
        initial_grants=(
            (OPERATOR.account, "shipments", "Execute"),
            (OPERATOR.account, "tracking", "Execute"),
        ),
        collator=COLLATOR_PROCESSOR.account,
        para_id=para_id,
    )


@pytest.fixture
def farmer_chain() -> Parachain:
    return Parachain(build_genesis_state(farmer_genesis()), collator=COLLATOR_FARMER)


@pytest.fixture
def processor_chain() -> Parachain:
    return Parachain(build_genesis_state(processor_genesis()), collator=COLLATOR_PROCESSOR)
