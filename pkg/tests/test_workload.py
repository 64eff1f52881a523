"""Catalog values and request-bundle generation tests."""

import numpy as np
import pytest

from sfcsim.topology import build_network
from sfcsim.workload import (SFC_ORDER, SfcRequest, catalog_from_config,
                             default_catalog, export_workload, generate_bundles,
                             import_workload)


def test_catalog_sfc_rows():
    cat = default_catalog()
    cg = cat.sfc("CG")
    assert [v.name for v in cg.chain] == ["NAT", "FW", "VOC", "WO", "IDPS"]
    assert cg.bandwidth == 4.0
    assert cg.e2e_tolerance == 80.0
    assert cg.bundle_range == (40, 55)

    miot = cat.sfc("MIoT")
    assert [v.name for v in miot.chain] == ["NAT", "FW", "IDPS"]
    assert miot.bandwidth == (1.0, 50.0)
    assert miot.e2e_tolerance == 5.0
    assert miot.bundle_range == (10, 15)

    voip = cat.sfc("VoIP")
    assert voip.bandwidth == 0.064
    assert voip.bundle_range == (100, 200)


def test_catalog_vnf_rows():
    cat = default_catalog()
    nat = cat.vnf("NAT")
    assert (nat.vcpu, nat.ram, nat.storage, nat.proc_time) == (1, 4, 7, 0.06)
    idps = cat.vnf("IDPS")
    assert (idps.vcpu, idps.ram, idps.storage, idps.proc_time) == (11, 15, 2, 0.02)
    fw = cat.vnf("FW")
    assert fw.proc_time == 0.03


def test_bundle_counts_scale_one():
    cat = default_catalog()
    g = build_network({"dc_count": 6, "seed": 1})
    for seed in range(10):
        reqs = generate_bundles(cat, g, 1.0, np.random.default_rng(seed))
        voip = sum(1 for r in reqs if r.sfc_type.name == "VoIP")
        assert 100 <= voip <= 200


def test_bundle_counts_scale_two():
    cat = default_catalog()
    g = build_network({"dc_count": 6, "seed": 1})
    for seed in range(10):
        reqs = generate_bundles(cat, g, 2.0, np.random.default_rng(seed))
        cg = sum(1 for r in reqs if r.sfc_type.name == "CG")
        assert 80 <= cg <= 110


def test_two_dc_graph_distinct_endpoints():
    cat = default_catalog()
    g = build_network({"dcs": [{"position": [0, 0]}, {"position": [1, 0]}],
                       "links": [{"a": 0, "b": 1}]})
    reqs = generate_bundles(cat, g, 1.0, np.random.default_rng(0))
    for r in reqs:
        assert r.source_dc != r.dest_dc
        assert {r.source_dc, r.dest_dc} <= {0, 1}


def test_fields_within_catalog_ranges():
    cat = default_catalog()
    g = build_network({"dc_count": 10, "seed": 2})
    reqs = generate_bundles(cat, g, 1.0, np.random.default_rng(3))
    for r in reqs:
        if r.sfc_type.name == "MIoT":
            assert 1.0 <= r.bandwidth <= 50.0
        else:
            assert r.bandwidth == r.sfc_type.bandwidth
        assert r.arrival == 0.0
        assert r.next_vnf_index == 0


def test_generation_deterministic():
    cat = default_catalog()
    g = build_network({"dc_count": 10, "seed": 2})
    a = generate_bundles(cat, g, 1.0, np.random.default_rng(9))
    b = generate_bundles(cat, g, 1.0, np.random.default_rng(9))
    assert [(r.id, r.sfc_type.name, r.bandwidth, r.source_dc, r.dest_dc)
            for r in a] == \
           [(r.id, r.sfc_type.name, r.bandwidth, r.source_dc, r.dest_dc)
            for r in b]


def test_request_delay_bookkeeping():
    cat = default_catalog()
    r = SfcRequest(0, cat.sfc("Ind4.0"), 70.0, 0, 1)
    assert r.next_vnf.name == "NAT"
    assert r.remaining_proc_time == pytest.approx(0.09)
    assert r.completion_fraction == 0.0
    r.next_vnf_index = 1
    assert r.next_vnf.name == "FW"
    assert r.completion_fraction == 0.5
    r.processing_total = 0.06
    r.propagation_total = 1.0
    assert r.accrued_delay == pytest.approx(1.06)
    r.ready_time = 2.0
    assert r.remaining_tolerance(5.0) == pytest.approx(8.0 - 1.06 - 3.0)


def test_workload_roundtrip(tmp_path):
    cat = default_catalog()
    g = build_network({"dc_count": 5, "seed": 4})
    reqs = generate_bundles(cat, g, 0.3, np.random.default_rng(5))
    path = tmp_path / "wl.jsonl"
    export_workload(reqs, str(path))
    back = import_workload(cat, str(path))
    assert [(r.id, r.sfc_type.name, r.bandwidth, r.source_dc, r.dest_dc)
            for r in reqs] == \
           [(r.id, r.sfc_type.name, r.bandwidth, r.source_dc, r.dest_dc)
            for r in back]


def test_catalog_overrides():
    cat = catalog_from_config({
        "vnfs": {"NAT": {"vcpu": 2}},
        "sfcs": {"CG": {"e2e_tolerance": 50.0}}})
    assert cat.vnf("NAT").vcpu == 2
    assert cat.sfc("CG").e2e_tolerance == 50.0
    # CG's chain references the overridden NAT
    assert cat.sfc("CG").chain[0].vcpu == 2
    # untouched entries keep the defaults
    assert cat.vnf("FW").vcpu == 9
    assert cat.sfc("VS").e2e_tolerance == 100.0


def test_generation_rejects_bad_scale():
    cat = default_catalog()
    g = build_network({"dc_count": 4, "seed": 0})
    with pytest.raises(ValueError):
        generate_bundles(cat, g, 0.0, np.random.default_rng(0))


def test_sfc_order_covers_catalog():
    cat = default_catalog()
    assert sorted(SFC_ORDER) == sorted(cat.sfcs)
