import math
from types import MappingProxyType

import pytest

from attacks.attack_engine import execute, run_scenarios
from attacks.brute_force_attack import read_wordlist, run_brute_force
from attacks.dos_attack import CALIBRATION_PARAMETERS, run_dos
from attacks.mitm_attack import ping_pairs, run_mitm
from attacks.scenarios import (
    AttackKind,
    AttackOutcome,
    AttackScenario,
    ObservedImpact,
    classify_impact,
    load_scenarios,
    scenario_from_document,
    select_scenarios,
    verdict,
)
from processors.cvss_engine import rank_categories
from processors.errors import ScenarioError, SimulationError, UnknownIdError
from simulation.simnet import new_sim
from simulation.topology import apply_hardening


CALIBRATION = {"packet_capacity": 100_000, "syn_backlog_limit": 2_400_000}


@pytest.fixture(scope="module")
def library():
    return {s.id: s for s in load_scenarios()}


@pytest.fixture(scope="module")
def ranked(catalog):
    return rank_categories(catalog.threat_categories.values())


def outcome(kind, succeeded=True, target_tc="TC1", **metrics):
    return AttackOutcome("manual", kind, target_tc, succeeded, MappingProxyType(metrics))


# =============================================================================
# Scenario library and selection
# =============================================================================

class TestScenarioLibrary:

    def test_shipped_scenarios(self, library):
        assert list(library) == ["brute_force", "brute_force_slow", "mitm", "dos"]
        assert not library["brute_force_slow"].primary
        assert [library[s].target_tc for s in ("brute_force", "mitm", "dos")] == ["TC2", "TC3", "TC4"]

    def test_missing_parameters(self):
        with pytest.raises(ScenarioError):
            scenario_from_document({"schema_version": 1, "id": "x", "kind": AttackKind.MITM, "target_tc": "TC3",
                                    "parameters": {"window": 5}})

    def test_unknown_kind(self):
        with pytest.raises(ScenarioError):
            scenario_from_document({"schema_version": 1, "id": "x", "kind": "Phishing", "target_tc": "TC1"})

    def test_directory_with_extra_files(self, tmp_path):
        (tmp_path / "zz_custom.yaml").write_text(
            "schema_version: 1\nid: custom\nkind: DosSynFlood\ntarget_tc: TC9\n"
            "parameters: {rate: 1000, duration: 1, port: 6653, packet_capacity: 100000, syn_backlog_limit: 2400000}\n",
            encoding="utf-8",
        )
        assert [s.id for s in load_scenarios(tmp_path)] == ["custom"]


class TestSelectScenarios:

    def test_top_three_ranks(self, ranked, library):
        selected = select_scenarios(ranked, 3, list(library.values()))
        assert [s.id for s in selected] == ["brute_force", "mitm", "dos"]

    def test_top_rank_only(self, ranked, library):
        assert [s.id for s in select_scenarios(ranked, 1, list(library.values()))] == ["brute_force"]

    def test_unmapped_ranks_are_listed(self, ranked, library):
        with pytest.raises(ScenarioError) as e:
            select_scenarios(ranked, 7, list(library.values()))
        assert e.value.unmapped_ranks == (4, 5, 6, 7)

    def test_ranks_beyond_the_list(self, ranked, library):
        with pytest.raises(ScenarioError) as e:
            select_scenarios(ranked, 9, list(library.values()))
        assert e.value.unmapped_ranks == (4, 5, 6, 7, 8, 9)

    @pytest.mark.parametrize("k", [0, -1])
    def test_k_must_be_positive(self, ranked, library, k):
        with pytest.raises(ScenarioError):
            select_scenarios(ranked, k, list(library.values()))

    def test_secondary_profiles_are_never_selected(self, ranked, library):
        only_slow = [library["brute_force_slow"], library["mitm"], library["dos"]]
        with pytest.raises(ScenarioError) as e:
            select_scenarios(ranked, 3, only_slow)
        assert e.value.unmapped_ranks == (1,)


# =============================================================================
# Brute force
# =============================================================================

class TestBruteForce:

    def test_fast_profile(self, testbed, library):
        result = execute(testbed, library["brute_force"])
        assert result.succeeded
        assert result.metric("credential_found") == ("onos", "rocks")
        assert result.metric("time_to_crack") == 4.0
        assert result.metric("attempts") == 40

    def test_slow_profile(self, testbed, library):
        result = execute(testbed, library["brute_force_slow"])
        assert result.succeeded
        assert result.metric("time_to_crack") == pytest.approx(1320.0)

    @pytest.mark.parametrize("scenario_id", ["brute_force", "brute_force_slow"])
    def test_time_matches_dictionary_position(self, testbed, library, scenario_id):
        scenario = library[scenario_id]
        position = read_wordlist(scenario.param("dictionary")).index(("onos", "rocks")) + 1
        result = execute(testbed, scenario)
        assert result.metric("time_to_crack") * scenario.param("rate") == pytest.approx(position)

    def test_hardened_login_resists(self, testbed, catalog, library):
        result = execute(apply_hardening(testbed, "M13", catalog), library["brute_force"])
        assert not result.succeeded
        assert result.metric("time_to_crack") is None
        assert result.metric("locked_out_attempts") > 0
        assert classify_impact(result) == ObservedImpact.NONE

    def test_inline_dictionary(self, testbed):
        sim = new_sim(testbed, 0)
        result = run_brute_force(sim, {"dictionary": ["admin:admin", "onos:rocks"], "rate": 2})
        assert result.metric("time_to_crack") == 1.0

    def test_empty_dictionary(self, testbed):
        with pytest.raises(ScenarioError):
            run_brute_force(new_sim(testbed, 0), {"dictionary": ["# nothing"], "rate": 1})

    def test_malformed_entry(self):
        with pytest.raises(ScenarioError):
            read_wordlist(["onos-rocks"])

    def test_zero_rate(self, testbed):
        with pytest.raises(ScenarioError):
            run_brute_force(new_sim(testbed, 0), {"dictionary": ["onos:rocks"], "rate": 0})

    def test_unknown_source(self, testbed):
        with pytest.raises(SimulationError):
            run_brute_force(new_sim(testbed, 0), {"dictionary": ["onos:rocks"], "rate": 1, "source": "eve"})


# =============================================================================
# Man in the middle
# =============================================================================

class TestMitm:

    def test_control_channel_exposure(self, testbed, library):
        result = execute(testbed, library["mitm"], seed=42)
        assert result.succeeded
        assert result.metric("nodes_exposed") == 13
        assert "attacker" not in result.metric("exposed_nodes")
        assert result.metric("exposed_services") == ("ICMP", "OpenFlow", "Telnet")
        assert result.metric("credentials_exposed") >= 1
        assert ("admin", "admin") in result.metric("exposed_credentials")
        assert classify_impact(result) == ObservedImpact.DEGRADED

    def test_tls_hides_control_traffic_but_not_telnet(self, testbed, catalog, library):
        result = execute(apply_hardening(testbed, "M6", catalog), library["mitm"], seed=42)
        assert result.metric("control_plaintext_packets") == 0
        assert result.metric("credentials_exposed") >= 1
        assert result.metric("nodes_exposed") < 13

    def test_idle_link(self, testbed):
        result = run_mitm(new_sim(testbed, 0), {"taps": ["attacker-c0"], "window": 5})
        assert not result.succeeded
        assert result.metric("nodes_exposed") == 0
        assert result.metric("services_exposed") == 0
        assert result.metric("credentials_exposed") == 0
        assert result.metric("plaintext_packets") == 0
        assert classify_impact(result) == ObservedImpact.NONE

    def test_no_telnet(self, testbed):
        result = run_mitm(new_sim(testbed, 0), {"taps": ["h1-s1"], "window": 3, "telnet": None})
        assert result.metric("credentials_exposed") == 0
        assert result.metric("exposed_services") == ("ICMP",)

    def test_ring_covers_every_domain_member(self, testbed):
        pairs = ping_pairs(new_sim(testbed, 0))
        assert len(pairs) == 9
        assert ("h1", "h4") in pairs and ("h7", "h1") in pairs

    def test_window_must_be_positive(self, testbed):
        with pytest.raises(SimulationError):
            run_mitm(new_sim(testbed, 0), {"taps": ["h1-s1"], "window": 0})


# =============================================================================
# SYN flood
# =============================================================================

class TestDos:

    def test_flood_destroys_every_domain(self, testbed, library):
        result = execute(testbed, library["dos"])
        assert result.succeeded
        assert result.metric("time_to_disruption") == pytest.approx(8.0)
        assert result.metric("domains_destroyed") == 3
        assert result.metric("self_recovered") is False
        assert result.metric("syn_sent") == 5_000_000
        assert result.metric("half_open_peak") == 4_000_000
        assert classify_impact(result) == ObservedImpact.SERVICE_LOSS

    def test_reconfigure_restores_traffic(self, testbed, library):
        sim = new_sim(testbed, 0)
        run_dos(sim, library["dos"].parameters, library["dos"])
        assert not sim.ping("h1", "h4").delivered
        sim.reconfigure_vpls()
        assert sim.ping("h1", "h4").delivered

    def test_rate_limit_prevents_disruption(self, testbed, catalog, library):
        result = execute(apply_hardening(testbed, "M8", catalog), library["dos"])
        assert not result.succeeded
        assert result.metric("time_to_disruption") is None
        assert result.metric("domains_destroyed") == 0
        assert classify_impact(result) == ObservedImpact.NONE

    def test_zero_rate(self, testbed):
        result = run_dos(new_sim(testbed, 0), {**CALIBRATION, "rate": 0, "duration": 10, "port": 6653, "recovery_window": 5})
        assert not result.succeeded
        assert result.metric("syn_sent") == 0

    def test_wrong_port(self, testbed):
        with pytest.raises(ScenarioError):
            run_dos(new_sim(testbed, 0), {**CALIBRATION, "rate": 1000, "duration": 1, "port": 80})

    @pytest.mark.parametrize("calibration", [
        {},
        {"syn_backlog_limit": 3_200_000},
        {"packet_capacity": 200_000},
    ])
    def test_disruption_follows_the_backlog_threshold(self, testbed, library, calibration):
        params = {**library["dos"].parameters, **calibration}
        rate, capacity, limit = params["rate"], params["packet_capacity"], params["syn_backlog_limit"]
        flood_start = params["flood_delay"]
        interval = testbed.controller_config.keepalive_interval
        miss_limit = testbed.controller_config.keepalive_miss_limit

        # Backlog grows by (rate - capacity) / 100 per tick and stalls the controller once past the limit.
        ticks = math.floor(limit * 100 / (rate - capacity)) + 1
        assert ticks / 100 <= params["duration"]
        stall = flood_start + ticks / 100
        first_missed = interval / 2 + math.ceil((stall - interval / 2) / interval) * interval
        destroyed = first_missed + (miss_limit - 1) * interval
        first_failed_probe = (math.floor(destroyed / params["probe_interval"]) + 1) * params["probe_interval"]

        result = run_dos(new_sim(testbed, 0), params, library["dos"])
        assert result.metric("stall_time") == pytest.approx(stall - flood_start)
        assert result.metric("destroyed_at") == pytest.approx(destroyed - flood_start)
        assert result.metric("time_to_disruption") == pytest.approx(first_failed_probe - flood_start)

    def test_shipped_calibration_numbers(self, testbed, library):
        result = execute(testbed, library["dos"])
        assert result.metric("stall_time") == pytest.approx(6.01)
        assert result.metric("destroyed_at") == pytest.approx(7.5)
        assert result.metric("time_to_disruption") == pytest.approx(8.0)

    @pytest.mark.parametrize("missing", CALIBRATION_PARAMETERS)
    def test_calibration_is_required(self, testbed, missing):
        params = {**CALIBRATION, "rate": 500_000, "duration": 10, "port": 6653}
        del params[missing]
        with pytest.raises(ScenarioError, match=missing):
            run_dos(new_sim(testbed, 0), params)

    def test_scenario_file_without_calibration(self, tmp_path):
        (tmp_path / "dos.yaml").write_text(
            "schema_version: 1\nid: dos\nkind: DosSynFlood\ntarget_tc: TC4\n"
            "parameters: {rate: 500000, duration: 10, port: 6653}\n",
            encoding="utf-8",
        )
        with pytest.raises(ScenarioError):
            load_scenarios(tmp_path)

    def test_calibration_reaches_the_controller(self, testbed):
        sim = new_sim(testbed, 0)
        sim.calibrate_control_plane(50_000, 10)
        assert sim.config.packet_capacity == 50_000
        assert sim.controller.syn_backlog_limit == 10
        assert sim.trace[-1].event == "control_plane_calibrated"

    def test_calibration_after_the_flood_is_scheduled(self, testbed):
        sim = new_sim(testbed, 0)
        sim.inject_syn_flood("attacker", 6653, 1000, 1, start=1.0)
        with pytest.raises(SimulationError):
            sim.calibrate_control_plane(100_000, 2_400_000)

    @pytest.mark.parametrize("capacity, limit", [(0, 10), (100, -1)])
    def test_calibration_bounds(self, testbed, capacity, limit):
        with pytest.raises(ScenarioError):
            new_sim(testbed, 0).calibrate_control_plane(capacity, limit)


# =============================================================================
# Verdicts
# =============================================================================

class TestVerdict:

    def test_critical_brute_force(self, catalog):
        v = verdict(outcome(AttackKind.BRUTE_FORCE, target_tc="TC2"), catalog)
        assert (v.expectation, v.observed_impact, v.consistent) == ("Critical", ObservedImpact.FULL_COMPROMISE, True)

    def test_failed_attack_on_critical_is_inconsistent(self, catalog):
        v = verdict(outcome(AttackKind.BRUTE_FORCE, succeeded=False, target_tc="TC2"), catalog)
        assert v.observed_impact == ObservedImpact.NONE
        assert not v.consistent

    def test_high_needs_credentials_when_degraded(self, catalog):
        with_creds = outcome(AttackKind.MITM, target_tc="TC3", nodes_exposed=4, credentials_exposed=1)
        without = outcome(AttackKind.MITM, target_tc="TC3", nodes_exposed=4, credentials_exposed=0)
        assert verdict(with_creds, catalog).consistent
        assert not verdict(without, catalog).consistent

    def test_medium_accepts_degraded(self, catalog):
        v = verdict(outcome(AttackKind.MITM, target_tc="TC4", nodes_exposed=2), catalog)
        assert v.expectation == "Medium"
        assert v.consistent

    def test_low_is_always_consistent(self, catalog):
        v = verdict(outcome(AttackKind.DOS_SYN_FLOOD, succeeded=False, target_tc="TC13"), catalog)
        assert v.expectation == "Low"
        assert v.observed_impact == ObservedImpact.NONE
        assert v.consistent

    def test_unknown_category(self, catalog):
        with pytest.raises(UnknownIdError):
            verdict(outcome(AttackKind.MITM, target_tc="TC99"), catalog)

    def test_sustained_disruption_without_destroyed_domains(self):
        o = outcome(AttackKind.DOS_SYN_FLOOD, time_to_disruption=3.0, self_recovered=False, domains_destroyed=0)
        assert classify_impact(o) == ObservedImpact.SERVICE_LOSS


# =============================================================================
# Engine
# =============================================================================

class TestEngine:

    def test_unknown_kind(self, testbed):
        scenario = AttackScenario("odd", "Phishing", "TC1", MappingProxyType({}))
        with pytest.raises(ScenarioError):
            execute(testbed, scenario)

    def test_workers_keep_scenario_order(self, testbed, library):
        scenarios = [library["mitm"], library["brute_force"], library["dos"]]
        sequential = run_scenarios(testbed, scenarios, seed=5)
        threaded = run_scenarios(testbed, scenarios, seed=5, max_workers=3)
        assert [o.scenario_id for o in threaded] == ["mitm", "brute_force", "dos"]
        assert threaded == sequential

    def test_same_seed_same_trace(self, testbed, library):
        a = execute(testbed, library["mitm"], seed=9)
        b = execute(testbed, library["mitm"], seed=9)
        assert [str(r) for r in a.trace] == [str(r) for r in b.trace]

    @pytest.mark.parametrize("seed", range(50))
    def test_brute_force_lockout_never_helps_the_attacker(self, testbed, catalog, library, seed):
        scenario = library["brute_force"]
        before = execute(testbed, scenario, seed)
        after = execute(apply_hardening(testbed, "M13", catalog), scenario, seed)
        assert after.succeeded <= before.succeeded
        if after.succeeded:
            assert after.metric("time_to_crack") >= before.metric("time_to_crack")
        assert ObservedImpact.level(classify_impact(after)) <= ObservedImpact.level(classify_impact(before))

    @pytest.mark.parametrize("seed", range(50))
    def test_rate_limit_never_worsens_the_flood(self, testbed, catalog, library, seed):
        scenario = library["dos"]
        before = execute(testbed, scenario, seed)
        after = execute(apply_hardening(testbed, "M8", catalog), scenario, seed)
        if after.metric("time_to_disruption") is not None:
            assert before.metric("time_to_disruption") is not None
            assert after.metric("time_to_disruption") >= before.metric("time_to_disruption")
        assert after.metric("domains_destroyed") <= before.metric("domains_destroyed")
        assert ObservedImpact.level(classify_impact(after)) <= ObservedImpact.level(classify_impact(before))

    @pytest.mark.parametrize("seed", range(50))
    def test_tls_never_widens_exposure(self, testbed, catalog, library, seed):
        scenario = library["mitm"]
        before = execute(testbed, scenario, seed)
        after = execute(apply_hardening(testbed, "M6", catalog), scenario, seed)
        for metric in ("nodes_exposed", "services_exposed", "credentials_exposed",
                       "plaintext_packets", "control_plaintext_packets"):
            assert after.metric(metric) <= before.metric(metric), metric
        assert ObservedImpact.level(classify_impact(after)) <= ObservedImpact.level(classify_impact(before))
