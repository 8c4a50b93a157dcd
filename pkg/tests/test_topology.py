from dataclasses import replace

import pytest

from processors import settings
from processors.errors import HardeningError, TopologyError, UnknownIdError
from simulation.topology import (
    DEFAULT_LOCKOUT_FAILURES,
    DomainStatus,
    LinkKind,
    NodeKind,
    apply_hardening,
    apply_hardening_set,
    default_testbed,
    load_topology,
    reconfigure_vpls,
    resolve_topology,
    same_vpls,
    save_topology,
    topology_from_document,
    topology_to_document,
    validate_topology,
)


def destroy_all(t):
    return replace(t, vpls_domains=tuple(replace(d, status=DomainStatus.DESTROYED) for d in t.vpls_domains))


# =============================================================================
# The built-in testbed
# =============================================================================

class TestDefaultTestbed:

    def test_is_valid(self, testbed):
        assert validate_topology(testbed) == []

    def test_shape(self, testbed):
        assert testbed.controller.id == "c0"
        assert testbed.switches == ["s1", "s2", "s3"]
        assert testbed.hosts == [f"h{i}" for i in range(1, 10)]
        assert len(testbed.nodes_of(NodeKind.ATTACKER)) == 1
        assert [l.id for l in testbed.links if l.kind == LinkKind.CONTROL] == ["c0-s1", "c0-s2", "c0-s3"]

    def test_domains_span_every_switch(self, testbed):
        for d in testbed.vpls_domains:
            assert {testbed.switch_of(h) for h in d.members} == {"s1", "s2", "s3"}

    def test_shipped_file_matches_builtin(self, testbed):
        assert load_topology(settings.DEFAULT_TOPOLOGY_PATH) == testbed

    def test_resolve(self, testbed):
        assert resolve_topology() == testbed
        assert resolve_topology("default") == testbed

    def test_unknown_lookups(self, testbed):
        with pytest.raises(UnknownIdError):
            testbed.node("s9")
        with pytest.raises(UnknownIdError):
            testbed.find_link("s1-s3")
        assert testbed.find_link("s1-c0").id == "c0-s1"


# =============================================================================
# Validation
# =============================================================================

class TestValidation:

    def test_second_controller(self, testbed):
        t = replace(testbed, nodes=testbed.nodes + (replace(testbed.nodes[0], id="c1"),))
        problems = validate_topology(t)
        assert any("exactly one controller" in p for p in problems)

    def test_host_in_two_domains(self, testbed):
        d1, d2, d3 = testbed.vpls_domains
        t = replace(testbed, vpls_domains=(d1, replace(d2, members=d2.members | {"h1"}), d3))
        assert any("belongs to both" in p for p in validate_topology(t))

    def test_disconnected(self, testbed):
        t = replace(testbed, links=tuple(l for l in testbed.links if "h9" not in l.endpoints))
        assert any("not connected" in p for p in validate_topology(t))

    def test_document_with_problems_is_rejected(self, testbed):
        document = topology_to_document(testbed)
        document["links"].append({"a": "s1", "b": "s7", "kind": "Data"})
        with pytest.raises(TopologyError):
            topology_from_document(document)

    def test_bad_controller_settings(self, testbed):
        document = topology_to_document(testbed)
        document["controller"]["packet_capacity"] = 0
        with pytest.raises(TopologyError):
            topology_from_document(document)

    @pytest.mark.parametrize("document", [None, {}, {"schema_version": 2}, {"schema_version": 1}])
    def test_malformed_documents(self, document):
        with pytest.raises(TopologyError):
            topology_from_document(document)


# =============================================================================
# VPLS
# =============================================================================

class TestVpls:

    def test_same_domain(self, testbed):
        assert same_vpls(testbed, "h1", "h4")
        assert not same_vpls(testbed, "h1", "h2")

    def test_destroyed_domains_isolate_nobody(self, testbed):
        assert not same_vpls(destroy_all(testbed), "h1", "h4")

    def test_unknown_host(self, testbed):
        with pytest.raises(UnknownIdError):
            same_vpls(testbed, "h1", "h42")

    def test_reconfigure_restores_baseline(self, testbed):
        restored = reconfigure_vpls(destroy_all(testbed))
        assert restored.vpls_domains == testbed.vpls_domains
        assert same_vpls(restored, "h1", "h4")

    def test_reconfigure_is_noop_when_healthy(self, testbed):
        assert reconfigure_vpls(testbed) is testbed


# =============================================================================
# Hardening
# =============================================================================

class TestHardening:

    def test_tls_encrypts_every_control_link(self, testbed, catalog):
        t = apply_hardening(testbed, "M6", catalog)
        assert t.controller_config.channel_tls
        assert all(l.encrypted for l in t.links if l.kind == LinkKind.CONTROL)
        assert not any(l.encrypted for l in t.links if l.kind != LinkKind.CONTROL)

    def test_rate_limit_is_half_capacity(self, testbed, catalog):
        t = apply_hardening(testbed, "M8", catalog)
        assert t.controller_config.control_rate_limit == testbed.controller_config.packet_capacity // 2

    def test_login_hardening(self, testbed, catalog):
        t = apply_hardening(testbed, "M13", catalog)
        config = t.controller_config
        assert not config.default_credentials
        assert ("onos", "rocks") not in config.credentials
        assert config.login_lockout.max_failures == DEFAULT_LOCKOUT_FAILURES
        assert config.login_delay > 0

    def test_is_idempotent(self, testbed, catalog):
        once = apply_hardening_set(testbed, ["M6", "M8", "M13"], catalog)
        twice = apply_hardening_set(once, ["M6", "M8", "M13"], catalog)
        assert twice == once
        assert once.hardening == ("M6", "M8", "M13")

    def test_does_not_touch_input(self, testbed, catalog):
        apply_hardening(testbed, "M6", catalog)
        assert testbed == default_testbed()

    def test_other_mitigations_are_annotations(self, testbed, catalog):
        t = apply_hardening(testbed, "M1", catalog)
        assert t.controller_config == testbed.controller_config
        assert t.hardening == ("M1",)
        assert t.annotations == ("M1 recorded; no simulated effect",)

    @pytest.mark.parametrize("mitigation_id,central_id", [("M5", "CS2"), ("M7", "CS3")])
    def test_inapplicable_mitigation_suggests_central(self, testbed, catalog, mitigation_id, central_id):
        with pytest.raises(HardeningError) as e:
            apply_hardening(testbed, mitigation_id, catalog)
        assert central_id in e.value.alternatives

    def test_inapplicable_without_catalog(self, testbed):
        with pytest.raises(HardeningError) as e:
            apply_hardening(testbed, "M5")
        assert e.value.alternatives == ("CS2",)

    def test_unknown_mitigation(self, testbed, catalog):
        with pytest.raises(HardeningError) as e:
            apply_hardening(testbed, "M99", catalog)
        assert e.value.alternatives == ()


# =============================================================================
# File format
# =============================================================================

class TestFileFormat:

    def test_hardened_topology_survives_save_and_load(self, testbed, catalog, tmp_path):
        hardened = apply_hardening_set(testbed, ["M6", "M13", "M1"], catalog)
        path = tmp_path / "topology.yaml"
        save_topology(hardened, path)
        assert load_topology(path) == hardened

    def test_destroyed_status_is_kept(self, testbed):
        broken = destroy_all(testbed)
        loaded = topology_from_document(topology_to_document(broken))
        assert all(not d.active for d in loaded.vpls_domains)
        assert reconfigure_vpls(loaded).vpls_domains == testbed.vpls_domains
