from processors.catalog_validator import CATALOG_CHECKS, CheckStatus, validate_catalog
from processors.knowledge_base import CatalogProfile, MitigationKind, load_catalog


def failing_checks(report):
    return {v.check for v in report.violations}


class TestShippedCatalogValidation:

    def test_shipped_catalog_is_valid(self, catalog):
        report = validate_catalog(catalog)
        assert report.ok, report.violations
        assert all(r.status == CheckStatus.PASSED for r in report.results)
        assert len(report.results) == len(CATALOG_CHECKS)

    def test_every_threat_has_vulnerability_and_mitigation_edges(self, catalog):
        for tid in catalog.threats:
            assert catalog.correlation.threat_to_vulns[tid]
            assert catalog.correlation.threat_to_specific.get(tid) or catalog.correlation.threat_to_central.get(tid)

    def test_no_central_solution_covers_everything(self, catalog):
        for m in catalog.central_mitigations:
            assert m.covered_threats != set(catalog.threats)

    def test_rows_for_display(self, catalog):
        rows = validate_catalog(catalog).as_rows()
        assert rows[0] == {"check": CATALOG_CHECKS[0][0], "status": CheckStatus.PASSED, "violations": 0, "notes": ""}


class TestViolations:

    def test_threat_without_vulnerability(self, catalog_document):
        document = catalog_document()
        document["threats"][0]["vulnerabilities"] = []
        report = validate_catalog(load_catalog(document))
        assert not report.ok
        assert [v.record_id for v in report.violations_for("correlation.threat_has_vulnerability")] == ["T1"]

    def test_inapplicable_without_central_coverage(self, catalog_document):
        document = catalog_document()
        for m in document["mitigations"]:
            if m["kind"] == MitigationKind.CENTRAL and "T5" in m["covers"]:
                m["covers"] = [t for t in m["covers"] if t != "T5"]
        report = validate_catalog(load_catalog(document))
        assert [v.record_id for v in report.violations_for("correlation.inapplicable_has_central")] == ["T5"]

    def test_inapplicable_mitigation_with_actions(self, catalog_document):
        document = catalog_document()
        m5 = next(m for m in document["mitigations"] if m["id"] == "M5")
        m5["actions"] = ["encrypt everything"]
        report = validate_catalog(load_catalog(document))
        assert "mitigation.inapplicable_has_no_actions" in failing_checks(report)

    def test_universal_central_solution(self, catalog_document):
        document = catalog_document()
        cs1 = next(m for m in document["mitigations"] if m["id"] == "CS1")
        cs1["covers"] = [t["id"] for t in document["threats"]]
        report = validate_catalog(load_catalog(document))
        assert [v.record_id for v in report.violations_for("mitigation.no_universal_central")] == ["CS1"]

    def test_severity_outside_band(self, catalog_document):
        document = catalog_document()
        document["threat_categories"][0]["severity"] = "High"
        report = validate_catalog(load_catalog(document))
        assert [v.record_id for v in report.violations_for("category.severity_band")] == ["TC1"]

    def test_vector_disagrees_with_base_score(self, catalog_document):
        document = catalog_document()
        document["threat_categories"][2]["vector"] = "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"
        report = validate_catalog(load_catalog(document))
        assert [v.record_id for v in report.violations_for("category.vector_base_score")] == ["TC3"]

    def test_stored_rank_disagrees(self, catalog_document):
        document = catalog_document()
        document["threat_categories"][3]["rank"] = 9
        report = validate_catalog(load_catalog(document))
        assert [v.record_id for v in report.violations_for("category.rank_consistent")] == ["TC4"]

    def test_empty_category(self, catalog_document):
        document = catalog_document()
        document["threat_categories"][5]["members"] = []
        report = validate_catalog(load_catalog(document))
        assert "category.members_non_empty" in failing_checks(report)


class TestProfiles:

    def _trimmed(self, catalog_document, profile):
        document = catalog_document()
        document["profile"] = profile
        document["threat_categories"] = document["threat_categories"][:4]
        return load_catalog(document)

    def test_reference_profile_checks_cardinalities(self, catalog_document):
        report = validate_catalog(self._trimmed(catalog_document, CatalogProfile.REFERENCE))
        assert [v.record_id for v in report.violations_for("reference.cardinalities")] == ["threat categories"]

    def test_custom_profile_skips_reference_checks(self, catalog_document):
        report = validate_catalog(self._trimmed(catalog_document, CatalogProfile.CUSTOM))
        assert report.ok
        skipped = {r.check for r in report.results if r.status == CheckStatus.SKIPPED}
        assert skipped == {"reference.cardinalities", "reference.stride_coverage"}

    def test_every_check_is_reported_even_when_skipped(self, catalog_document):
        report = validate_catalog(self._trimmed(catalog_document, CatalogProfile.CUSTOM))
        assert report.checks == tuple(name for name, _, _ in CATALOG_CHECKS)
