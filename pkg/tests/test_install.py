from envalign.executor import ExecConfig, Phase, default_install_cmd, run_phase
from envalign.install import main


def test_bundled_index_installs_declared_stubs(make_repo):
    root = make_repo({"requirements.txt": "requests>=2\n"})
    assert main([str(root), "--target", str(root / ".envalign/site"), "--local-index", "bundled"]) == 0
    assert (root / ".envalign/site/requests/__init__.py").is_file()


def test_target_mirrors_current_declarations(make_repo):
    root = make_repo({"requirements.txt": "requests\n"})
    site = root / ".envalign/site"
    main([str(root), "--target", str(site), "--local-index", "bundled"])
    (root / "requirements.txt").write_text("tabulate\n")
    main([str(root), "--target", str(site), "--local-index", "bundled"])
    assert sorted(p.name for p in site.iterdir()) == ["tabulate"]


def test_unknown_package_reports_like_pip(make_repo):
    root = make_repo({"requirements.txt": "no-such-pkg-xyz==9.9\n"})
    log = run_phase(root, Phase.INSTALL, ExecConfig(install_cmd=default_install_cmd("bundled")))
    assert log.exit_code == 1
    assert "No matching distribution found for no-such-pkg-xyz" in log.stderr
