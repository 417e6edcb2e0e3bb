import pytest
from hypothesis import given, settings, strategies as st

from sepal import atomic
from sepal.parsers import (
    PolicyParseError,
    atomic_to_flat,
    parse_cil,
    parse_file_contexts,
    parse_flat,
    parse_rc,
    parse_seapp,
    parse_te_comments,
)
from sepal.policy import ALLOW, NEVERALLOW, And, AtomicRule, Name, Not, Or

CIL_APP_DATA = """
(type bluetooth)
(type platform_app)
(type untrusted_app)
(type app_data_file)
(typeattribute base_typeattr_97)
(typeattributeset base_typeattr_97 (bluetooth platform_app untrusted_app))
(allow base_typeattr_97 app_data_file (file (getattr open read ioctl lock map)))
"""

FLAT_APP_DATA = """
allow bluetooth app_data_file: file getattr open read ioctl lock map ;
allow platform_app app_data_file: file getattr open read ioctl lock map;
allow untrusted_app app_data_file: file getattr open read ioctl lock map;
"""


def test_cil_allow_rule():
    db = parse_cil(CIL_APP_DATA)
    assert len(db.rules) == 1
    rule = db.rules[0]
    assert rule.op == ALLOW
    assert rule.subject == Name("base_typeattr_97")
    assert rule.target == Name("app_data_file")
    assert rule.klass == "file"
    assert len(rule.permissions) == 6


def test_cil_typeattributeset_negation_shape():
    text = "(typeattributeset base_typeattr_293 (and (appdomain) not (shell con_monitor_app)))"
    db = parse_cil(text)
    expected = And((Name("appdomain"), Not(Or((Name("shell"), Name("con_monitor_app"))))))
    assert db.memberships["base_typeattr_293"] == expected


def test_cil_empty_input():
    db = parse_cil("")
    assert not db.rules and not db.types and not db.attributes


def test_cil_unbalanced_parens():
    with pytest.raises(PolicyParseError):
        parse_cil("(type a")
    with pytest.raises(PolicyParseError):
        parse_cil("(type a))")


def test_cil_empty_permission_list():
    with pytest.raises(PolicyParseError):
        parse_cil("(allow a b (file ()))")


def test_cil_unknown_forms_counted():
    db = parse_cil("(handleunknown allow)\n(mls true)\n(class file (read))\n(type t)")
    assert db.skipped_forms == {"handleunknown": 1, "mls": 1, "class": 1}


def test_cil_comments_and_transition():
    db = parse_cil(
        ";; header comment\n(type init)\n(type mediadrmserver_exec)\n(type mediadrmserver)\n"
        "(typetransition init mediadrmserver_exec process mediadrmserver) ; trailing\n"
    )
    (tr,) = db.transitions
    assert (tr.source, tr.exec_type, tr.klass, tr.result) == (
        "init",
        "mediadrmserver_exec",
        "process",
        "mediadrmserver",
    )


def test_cil_block_flattening():
    db = parse_cil("(block vendor (type widget) (typeattribute gadgets))")
    assert "vendor.widget" in db.types
    assert "vendor.gadgets" in db.attributes


def test_strict_mode_rejects_undeclared_names():
    from sepal.policy import UnknownName

    text = "(allow ghost_domain app_data_file (file (read)))"
    db = parse_cil(text)  # default: auto-declared with a warning
    assert "ghost_domain" in db.types and db.warnings
    with pytest.raises(UnknownName):
        parse_cil(text, strict=True)
    with pytest.raises(UnknownName):
        parse_flat("allow ghost b:c d;", strict=True)


def test_flat_single_statement():
    db = parse_flat("allow untrusted_app app_data_file: file getattr open read ioctl lock map;")
    (rule,) = db.rules
    assert len(rule.permissions) == 6
    assert rule.subject == Name("untrusted_app")


def test_flat_single_permission():
    db = parse_flat("allow init kernel:security load_policy;")
    (rule,) = db.rules
    assert rule.permissions == frozenset({"load_policy"})
    assert rule.klass == "security"


def test_flat_braced_permissions_and_multiline():
    db = parse_flat("allow a b:c { p1\n  p2 };\nallow d e:f g;")
    assert len(db.rules) == 2
    assert db.rules[0].permissions == frozenset({"p1", "p2"})


def test_flat_empty_permissions_rejected():
    with pytest.raises(PolicyParseError):
        parse_flat("allow a b:c {};")


def test_flat_malformed_statement_reports_line():
    with pytest.raises(PolicyParseError) as err:
        parse_flat("# fine\nallow broken;")
    assert err.value.line == 2


def test_flat_star_expands_from_class_table():
    db = parse_flat("allow su device_node:fd *;")
    (rule,) = db.rules
    assert rule.permissions == frozenset({"use"})


def test_flat_comments_ignored():
    db = parse_flat("# a comment with ; inside\nallow a b:c d; # trailing\n")
    assert len(db.rules) == 1


def test_flat_self_target():
    db = parse_flat("allow mediaserver self:process ptrace;")
    assert db.rules[0].target == Name("self")
    assert "self" not in db.types
    from sepal.atomic import expand

    assert {(a.subject, a.target) for a in expand(db)} == {("mediaserver", "mediaserver")}


def test_flat_bad_permission_token_reports_line():
    with pytest.raises(PolicyParseError) as err:
        parse_flat("allow ok fine:c read;\nallow a b:c ~{ read };")
    assert err.value.line == 2


def test_cil_bad_identifier_reports_position():
    with pytest.raises(PolicyParseError) as err:
        parse_cil("(type fine)\n(type bad{name)")
    assert err.value.line == 2


def test_cil_flat_expansions_identical():
    cil_atoms = atomic.expand(parse_cil(CIL_APP_DATA))
    flat_atoms = atomic.expand(parse_flat(FLAT_APP_DATA))
    assert cil_atoms == flat_atoms
    assert len(cil_atoms) == 3 * 6


def test_roundtrip_canonical_flat():
    db = parse_cil(CIL_APP_DATA)
    atoms = atomic.expand(db)
    reparsed = parse_flat(atomic_to_flat(atoms))
    assert atomic.expand(reparsed) == atoms


_ident = st.text(alphabet="abcdefgh_", min_size=1, max_size=6)


@settings(max_examples=50, deadline=None)
@given(
    st.sets(
        st.builds(
            AtomicRule,
            subject=_ident,
            target=_ident,
            klass=_ident,
            perm=_ident,
            label=st.sampled_from([ALLOW, NEVERALLOW]),
        ),
        min_size=1,
        max_size=12,
    )
)
def test_roundtrip_arbitrary_atomic_sets(atoms):
    text = atomic_to_flat(atoms)
    assert atomic.expand(parse_flat(text)) == atoms
    # Serialization is canonical: a second pass is byte-identical.
    assert atomic_to_flat(atomic.expand(parse_flat(text))) == text


# --- TE comment scanning ------------------------------------------------------


def test_te_comment_routing(fixtures):
    allow_doc, never_doc = parse_te_comments((fixtures / "app.te").read_text(), "app")
    assert "allow apps to send dump information to dumpstate" in allow_doc.sentences
    assert "apps must never write to the camera device" in never_doc.sentences
    # The macro call is an allow-side statement.
    assert "debug-only heap dump support" in allow_doc.sentences


def test_te_neverallow_block(fixtures):
    allow_doc, never_doc = parse_te_comments((fixtures / "hal_audio.te").read_text(), "hal_audio")
    assert "only audio hal may access the audio hardware" in never_doc.sentences
    assert "allow hal_audio to use the audio device" in allow_doc.sentences


def test_te_every_block_lands_once(fixtures):
    for name in ("app.te", "hal_audio.te"):
        text = (fixtures / name).read_text()
        blocks = 0
        prev_comment = False
        for line in text.splitlines():
            is_comment = line.strip().startswith("#")
            if is_comment and not prev_comment:
                blocks += 1
            prev_comment = is_comment
        allow_doc, never_doc = parse_te_comments(text, name)
        # Sentence splitting can produce more sentences than blocks, never fewer.
        assert len(allow_doc.sentences) + len(never_doc.sentences) >= blocks


def test_te_no_comments():
    allow_doc, never_doc = parse_te_comments("allow a b:c d;\n", "x")
    assert allow_doc.sentences == [] and never_doc.sentences == []


def test_te_sentences_lowercased_ascii_split():
    allow_doc, _ = parse_te_comments("# First thing. Second thing: thirdé thing\nallow a b:c d;", "x")
    assert allow_doc.sentences == ["first thing", "second thing", "third thing"]


# --- side tables -----------------------------------------------------------------


def test_file_contexts(fixtures):
    entries = parse_file_contexts((fixtures / "file_contexts").read_text())
    by_path = {e.path_pattern: e.label_type for e in entries}
    assert by_path["/system/bin/mediadrmserver"] == "mediadrmserver_exec"
    assert len(entries) == 5


def test_file_contexts_single_line():
    (entry,) = parse_file_contexts("/system/bin/mediadrmserver u:object_r:mediadrmserver_exec:s0")
    assert entry.path_pattern == "/system/bin/mediadrmserver"
    assert entry.label_type == "mediadrmserver_exec"


def test_rc_service_blocks(fixtures):
    services = parse_rc((fixtures / "init.rc").read_text())
    by_name = {s.service_name: s for s in services}
    assert by_name["mediadrm"].executable_path == "/system/bin/mediadrmserver"
    assert by_name["mediadrm"].user == "media"
    assert by_name["surfaceflinger"].user == "system"
    # No user option means the service runs as root.
    assert by_name["netmgrd"].user == "root"


def test_rc_minimal_block():
    (svc,) = parse_rc("service mediadrm /system/bin/mediadrmserver\n    user media\n")
    assert (svc.service_name, svc.executable_path, svc.user) == (
        "mediadrm",
        "/system/bin/mediadrmserver",
        "media",
    )


def test_seapp(fixtures):
    entries = parse_seapp((fixtures / "seapp_contexts").read_text())
    by_domain = {e.domain: e for e in entries}
    assert by_domain["untrusted_app"].assigned_user_class == "_app"
    assert by_domain["isolated_app"].assigned_user_class == "_isolated"
    assert by_domain["system_app"].assigned_user_class == "system"
    assert by_domain["system_server"].assigned_user_class == ""


def test_empty_side_tables():
    assert parse_file_contexts("") == []
    assert parse_rc("") == []
    assert parse_seapp("") == []
