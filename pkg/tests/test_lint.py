import pytest

from src.parser.include_resolver import IncludeResolver
from src.parser.lint import Severity, has_findings, lint_profiles
from src.parser.profile_parser import ProfileParser


def _codes(diagnostics):
    return sorted(d.code for d in diagnostics)


def test_r_compile_has_one_w_m_hazard(resolver):
    profiles = ProfileParser(resolver).load_profile_dir(["r-compile"])
    diagnostics = lint_profiles(profiles)
    assert [d.code for d in diagnostics] == ["w-m-hazard"]
    assert diagnostics[0].line == 11
    assert "/tmp/** rwm," in diagnostics[0].message
    assert has_findings(diagnostics)


def test_r_base_is_clean(resolver):
    profiles = ProfileParser(resolver).load_profile_dir(["r-base"])
    assert lint_profiles(profiles) == []


def test_r_user_hazards(resolver):
    profiles = ProfileParser(resolver).load_profile_dir(["r-user"])
    assert _codes(lint_profiles(profiles)) == ["w-ix-hazard", "w-ix-hazard", "w-m-hazard", "w-m-hazard"]


def test_synthetic_findings(tmp_path):
    text = "\n".join([
        "#include <missing>",
        "profile launcher {",
        "  change_profile -> nowhere,",
        "  /opt/tool ux,",
        "  /opt/other px,",
        "  /opt/hats/worker cs,",
        "  /etc/hosts r,",
        "  /etc/hosts r,",
        "}",
        "profile off flags=(disabled) {",
        "  ^idle {",
        "  }",
        "}",
    ]) + "\n"
    parser = ProfileParser(IncludeResolver([str(tmp_path)]), strict=False)
    diagnostics = lint_profiles(parser.parse(text))
    assert _codes(diagnostics) == [
        "duplicate-rule",
        "unreachable-hat",
        "unresolved-cs",
        "unresolved-include",
        "unresolved-px",
        "unresolved-transition",
        "ux-dangerous",
    ]
    duplicate = next(d for d in diagnostics if d.code == "duplicate-rule")
    assert duplicate.severity == Severity.INFO
    assert duplicate.line == 8
    assert has_findings(diagnostics)


def test_info_only_is_not_a_finding(parse):
    diagnostics = lint_profiles(parse("profile p {\n  /a r,\n  /a r,\n}\n"))
    assert [d.code for d in diagnostics] == ["duplicate-rule"]
    assert not has_findings(diagnostics)


@pytest.mark.parametrize("text", [
    "/usr/bin/R {\n}\nprofile p {\n  /usr/bin/R px,\n}\n",
    "/usr/bin/R {\n}\nprofile p {\n  /usr/bin/* px,\n}\n",
])
def test_resolved_px_is_quiet(parse, text):
    assert lint_profiles(parse(text)) == []
