import io

import pytest
import yaml

from processors.errors import CatalogSchemaError, DanglingReferenceError, DuplicateIdError, UnknownIdError
from processors.knowledge_base import (
    CatalogProfile,
    MitigationKind,
    Stride,
    Surface,
    catalog_to_document,
    find_threats,
    load_catalog,
    mitigations_for,
    save_catalog,
    stride_summary,
    threats_for_surface,
    vulnerabilities_for,
)


# =============================================================================
# Loading the shipped catalog
# =============================================================================

class TestShippedCatalog:

    def test_cardinalities(self, catalog):
        assert len(catalog.root_threats) == 4
        assert len(catalog.threats) == 18
        assert len(catalog.vulnerabilities) == 18
        assert len(catalog.specific_mitigations) == 18
        assert len(catalog.central_mitigations) == 3
        assert len(catalog.threat_categories) == 14

    def test_metadata(self, catalog):
        assert catalog.schema_version == 1
        assert catalog.catalog_version == "2022.1"
        assert catalog.profile == CatalogProfile.REFERENCE

    def test_only_v4_is_not_mappable(self, catalog):
        assert [v.id for v in catalog.vulnerabilities.values() if v.not_mappable] == ["V4"]

    def test_inapplicable_mitigations(self, catalog):
        inapplicable = [m.id for m in catalog.specific_mitigations if not m.applicable]
        assert inapplicable == ["M5", "M7"]
        assert catalog.mitigations["M5"].actions == ()

    def test_loads_from_stream_and_mapping(self, catalog, catalog_document):
        text = yaml.safe_dump(catalog_document(), sort_keys=False)
        assert load_catalog(io.StringIO(text)) == catalog
        assert load_catalog(catalog_document()) == catalog

    def test_save_and_reload(self, catalog, tmp_path):
        path = tmp_path / "catalog.yaml"
        save_catalog(catalog, path)
        assert load_catalog(path) == catalog

    def test_document_round_trip_is_stable(self, catalog):
        document = catalog_to_document(catalog)
        assert catalog_to_document(load_catalog(document)) == document


# =============================================================================
# Schema errors
# =============================================================================

class TestSchemaErrors:

    def test_missing_schema_version(self, catalog_document):
        document = catalog_document()
        del document["schema_version"]
        with pytest.raises(CatalogSchemaError) as e:
            load_catalog(document)
        assert e.value.field == "schema_version"

    def test_unsupported_schema_version(self, catalog_document):
        document = catalog_document()
        document["schema_version"] = 2
        with pytest.raises(CatalogSchemaError):
            load_catalog(document)

    def test_empty_document(self):
        with pytest.raises(CatalogSchemaError):
            load_catalog(io.StringIO(""))

    def test_missing_field_names_record(self, catalog_document):
        document = catalog_document()
        del document["threats"][2]["name"]
        with pytest.raises(CatalogSchemaError) as e:
            load_catalog(document)
        assert e.value.record_id == "T3"
        assert e.value.field == "name"

    def test_unknown_stride_value(self, catalog_document):
        document = catalog_document()
        document["threats"][0]["stride"] = ["Spoofing", "Sneaking"]
        with pytest.raises(CatalogSchemaError) as e:
            load_catalog(document)
        assert e.value.field == "stride"

    def test_bad_vector(self, catalog_document):
        document = catalog_document()
        document["threat_categories"][0]["vector"] = "CVSS:3.1/AV:N"
        with pytest.raises(CatalogSchemaError) as e:
            load_catalog(document)
        assert e.value.record_id == "TC1"

    def test_score_out_of_range(self, catalog_document):
        document = catalog_document()
        document["threat_categories"][0]["base_score"] = "10.5"
        with pytest.raises(CatalogSchemaError):
            load_catalog(document)

    def test_decimal_comma_scores_are_accepted(self, catalog, catalog_document):
        document = catalog_document()
        document["threat_categories"][0]["base_score"] = "9,0"
        assert load_catalog(document).category("TC1").base_score == catalog.category("TC1").base_score

    def test_dangling_vulnerability_reference(self, catalog_document):
        document = catalog_document()
        document["threats"][0]["vulnerabilities"] = ["V99"]
        with pytest.raises(DanglingReferenceError) as e:
            load_catalog(document)
        assert (e.value.source_id, e.value.target_id) == ("T1", "V99")

    def test_dangling_central_coverage(self, catalog_document):
        document = catalog_document()
        central = next(m for m in document["mitigations"] if m["kind"] == MitigationKind.CENTRAL)
        central["covers"] = central["covers"] + ["T42"]
        with pytest.raises(DanglingReferenceError):
            load_catalog(document)

    def test_duplicate_id(self, catalog_document):
        document = catalog_document()
        document["vulnerabilities"].append(dict(document["vulnerabilities"][0]))
        with pytest.raises(DuplicateIdError):
            load_catalog(document)


# =============================================================================
# Queries
# =============================================================================

class TestQueries:

    def test_every_surface_has_threats(self, catalog):
        for surface in Surface.ALL:
            assert threats_for_surface(catalog, surface)

    def test_data_layer_threats(self, catalog):
        ids = {t.id for t in threats_for_surface(catalog, Surface.DATA_LAYER)}
        assert "T7" in ids
        assert all(Surface.DATA_LAYER in catalog.threat(t).affected_surfaces for t in ids)

    def test_unknown_surface(self, catalog):
        with pytest.raises(UnknownIdError):
            threats_for_surface(catalog, "Basement")

    def test_vulnerabilities_for(self, catalog):
        assert {v.id for v in vulnerabilities_for(catalog, "T4")} == {"V4"}

    def test_vulnerabilities_for_unknown_threat(self, catalog):
        with pytest.raises(UnknownIdError):
            vulnerabilities_for(catalog, "T99")

    def test_unknown_id_is_a_key_error(self, catalog):
        with pytest.raises(KeyError):
            catalog.category("TC99")

    def test_specific_mitigation(self, catalog):
        entry = mitigations_for(catalog, "T1")
        assert entry.specific.id == "M1"
        assert entry.central == ()
        assert not entry.central_only

    @pytest.mark.parametrize("threat_id,central_id", [("T5", "CS2"), ("T7", "CS3")])
    def test_central_only_threats(self, catalog, threat_id, central_id):
        entry = mitigations_for(catalog, threat_id)
        assert entry.specific is None
        assert entry.central_only
        assert central_id in {c.id for c in entry.central}
        assert entry.inapplicable == (f"M{threat_id[1:]}",)

    def test_stride_summary_covers_every_category(self, catalog):
        summary = stride_summary(catalog)
        assert list(summary) == list(Stride.ALL)
        assert all(summary[c] for c in Stride.ALL)


class TestFindThreats:

    def test_name_match_comes_first(self, catalog):
        matches = find_threats(catalog, "weaken encryption")
        assert matches[0][0].id == "T5"
        assert matches[0][1] == 100

    def test_results_are_limited_and_sorted(self, catalog):
        matches = find_threats(catalog, "traffic", limit=3, threshold=0)
        assert len(matches) == 3
        scores = [score for _, score in matches]
        assert scores == sorted(scores, reverse=True)

    def test_blank_query(self, catalog):
        assert find_threats(catalog, "   ") == []
