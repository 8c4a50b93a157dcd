import hmac
from datetime import datetime, timezone

import pandas as pd
import streamlit as st

from processors import settings
from processors.catalog_validator import validate_catalog
from processors.cvss_engine import Severity
from processors.errors import SdnsecError
from processors.knowledge_base import load_catalog
from processors.pipeline_engine import run_assessment
from processors.report_formatter import ReportFormat, attack_frame, plan_frame, ranking_frame, render_report
from simulation.topology import KNOWN_SPECIFIC_MITIGATIONS, default_testbed


def dashboard_unlocked() -> bool:
    """
    Gate for the dashboard. The expected password comes from
    SDNSEC_DASHBOARD_PASSWORD, else from the app_config.password secret;
    with neither configured the dashboard stays locked.
    """
    expected = settings.dashboard_password()
    if expected is None:
        try:
            expected = st.secrets["app_config"]["password"]
        except (KeyError, FileNotFoundError):
            st.error("No dashboard password configured. Set SDNSEC_DASHBOARD_PASSWORD or app_config.password.")
            return False

    if st.session_state.get("analyst_unlocked", False):
        return True

    def submit():
        entered = st.session_state.pop("analyst_password", "")
        st.session_state["analyst_unlocked"] = hmac.compare_digest(entered.encode(), str(expected).encode())
        st.session_state["analyst_attempted"] = True

    st.text_input("Analyst password", type="password", on_change=submit, key="analyst_password")
    if st.session_state.get("analyst_attempted") and not st.session_state.get("analyst_unlocked"):
        st.error("Wrong password; the assessment dashboard stays locked.")
    return False


# Light backgrounds per severity band, strongest for Critical.
SEVERITY_COLORS = {
    Severity.CRITICAL: '#f5c6cb',
    Severity.HIGH: '#f8d7da',
    Severity.MEDIUM: '#fff3cd',
    Severity.LOW: '#d4edda',
    Severity.NONE: '#e9ecef',
}

# Mitigations the simulator models; the rest are recorded as annotations only.
SIMULATED_HARDENING = ("M6", "M8", "M13")


def style_severity_cells(value):
    color = SEVERITY_COLORS.get(value)
    return f'background-color: {color}' if color else ''


def style_consistency_cells(value):
    if value == "yes":
        return 'background-color: #d4edda'
    if value == "no":
        return 'background-color: #fff3cd'
    return ''


if dashboard_unlocked():

    st.set_page_config(
        page_title="SDN Security Evaluation",
        page_icon="🛡️",
        layout="wide"
    )

    st.markdown("""
        <style>
            .block-container {
                padding-top: 1rem;
            }
        </style>
    """, unsafe_allow_html=True)

    st.title("🛡️ SDN Security Evaluation")
    st.caption("Threat analysis, CVSS ranking, attack simulation and mitigation planning for the SDN testbed.")

    @st.cache_resource
    def get_catalog(path: str):
        return load_catalog(path)

    try:
        catalog = get_catalog(str(settings.resolve_kb_path()))
    except SdnsecError as e:
        st.error(f"Could not load the threat catalog: {e}")
        st.stop()

    # --- Controls ---
    with st.sidebar:
        st.header("Assessment settings")
        attacks = st.slider("Attack scenarios (top ranks)", min_value=0, max_value=3, value=3)
        seed = st.number_input("Seed", min_value=0, value=42, step=1)
        hardening = st.multiselect(
            "Hardening",
            options=[m for m in KNOWN_SPECIFIC_MITIGATIONS if catalog.mitigations.get(m) and catalog.mitigations[m].applicable],
            default=[],
            help=f"Only {', '.join(SIMULATED_HARDENING)} change simulator behaviour; other mitigations are recorded as annotations.",
        )
        decimal_comma = st.checkbox("Decimal comma", value=settings.DECIMAL_COMMA)

        validation = validate_catalog(catalog)
        if validation.ok:
            st.success(f"✓ Catalog {catalog.catalog_version} valid")
        else:
            st.error(f"✗ Catalog has {len(validation.violations)} violation(s)")
            with st.expander("Violations"):
                st.dataframe(pd.DataFrame(validation.as_rows()), use_container_width=True)

    if st.button("Run Assessment", type="primary", use_container_width=True):
        with st.spinner("Running the four assessment stages..."):
            try:
                st.session_state.report = run_assessment(
                    catalog, default_testbed(), k=attacks, seed=int(seed), hardening=hardening,
                    clock=lambda: datetime.now(timezone.utc),
                )
            except SdnsecError as e:
                st.error(f"Assessment failed: {e}")
                st.session_state.report = None

    report = st.session_state.get("report")
    if report:
        st.success("Assessment complete!")

        # =================================================================
        # --- 1. THREAT FINDINGS ---
        # =================================================================
        st.header("1. Threat findings")
        col1, col2 = st.columns(2)
        with col1:
            st.dataframe(
                pd.DataFrame(
                    [{"Surface": s, "Threats": ", ".join(report.stage1.threats_on(s))} for s in report.stage1.surfaces]
                ),
                use_container_width=True, hide_index=True,
            )
        with col2:
            st.dataframe(
                pd.DataFrame(
                    [{"Root threat": r, "Sub-threats": ", ".join(m)} for r, m in report.stage1.root_summary.items()]
                ),
                use_container_width=True, hide_index=True,
            )
        st.divider()

        # =================================================================
        # --- 2. CVSS RANKING ---
        # =================================================================
        st.header("2. CVSS results ordered by TC severity")
        ranking_df = ranking_frame(report, decimal_comma)
        table_height = (len(ranking_df) + 1) * 35 + 3
        st.dataframe(
            ranking_df.style.map(style_severity_cells, subset=["Severity"]),
            use_container_width=True, hide_index=True, height=table_height,
        )
        st.divider()

        # =================================================================
        # --- 3. ATTACK SIMULATION ---
        # =================================================================
        st.header("3. Attack simulation")
        if not report.stage3:
            st.info("Simulation skipped: catalog-only assessment.")
        else:
            st.dataframe(
                attack_frame(report).style.map(style_consistency_cells, subset=["Consistent"]),
                use_container_width=True, hide_index=True,
            )
            tabs = st.tabs([r.scenario.id.replace('_', ' ').title() for r in report.stage3])
            for tab, result in zip(tabs, report.stage3):
                with tab:
                    st.subheader(f"{result.scenario.kind} against {result.scenario.target_tc}")
                    metric_cols = st.columns(3)
                    metric_cols[0].metric("Succeeded", "yes" if result.outcome.succeeded else "no")
                    metric_cols[1].metric("Observed impact", result.verdict.observed_impact)
                    metric_cols[2].metric("Expected", result.verdict.expectation)
                    if result.verdict.consistent:
                        st.success(f"✓ {result.verdict.notes}")
                    else:
                        st.warning(f"⚠ {result.verdict.notes}")
                    st.dataframe(
                        pd.DataFrame(
                            [{"Metric": k, "Value": str(v)} for k, v in result.outcome.metrics.items()]
                        ),
                        use_container_width=True, hide_index=True,
                    )
        st.divider()

        # =================================================================
        # --- 4. MITIGATION PLAN ---
        # =================================================================
        st.header("4. Mitigation plan")
        st.dataframe(plan_frame(report), use_container_width=True, hide_index=True)
        if report.stage4.central_required:
            st.warning(f"A central security solution is required: {', '.join(report.stage4.central_solutions)}")
        else:
            st.success("Specific mitigations cover every threat.")

        st.download_button(
            "Download report (YAML)",
            data=render_report(report, ReportFormat.STRUCTURED),
            file_name=f"assessment_seed{report.metadata.seed}.yaml",
            mime="application/x-yaml",
        )
