import json

import httpx
import numpy as np
import pytest

from litscape import corpus, harvest
from litscape.corpus import DocumentRecord, Stage
from litscape.stubserver import StubServer, StubState


def screened(records):
    return [corpus.advance(r, Stage.SCREENED_IN) for r in records]


def xml_article(text):
    return f"<full-text-retrieval-response><originalText><body><p>{text}</p></body></originalText></full-text-retrieval-response>"


@pytest.fixture
def stub():
    with StubServer(StubState()) as server:
        yield server


def small_fixture(state: StubState):
    """10 screened records: 4 open access, 3 publisher, 3 paywalled."""
    recs = []
    for i in range(4):
        doi = f"10.5555/oa.{i}"
        state.oa[doi] = None  # filled with a URL by the caller who knows the server address
        state.files[f"oa{i}.txt"] = ("text/plain", f"Open text number {i} about life cycle assessment.")
        recs.append(DocumentRecord(id=f"r{i}", title=f"OA {i}", abstract="x", year=2020, doi=doi))
    for i in range(3):
        doi = f"10.1016/j.pub.{i}"
        state.oa[doi] = None
        state.publisher[doi] = (200, xml_article(f"Publisher body {i}."))
        recs.append(DocumentRecord(id=f"r{4 + i}", title=f"P {i}", abstract="x", year=2020, doi=doi))
    for i, doi in enumerate(["10.1016/j.pay.0", "10.1016/j.pay.1", "10.1007/closed.2"]):
        state.oa[doi] = None
        if doi.startswith("10.1016"):
            state.publisher[doi] = (403, "<service-error>not entitled</service-error>")
        recs.append(DocumentRecord(id=f"r{7 + i}", title=f"X {i}", abstract="x", year=2020, doi=doi))
    return screened(recs)


def bind_urls(server):
    for i in range(4):
        server.state.oa[f"10.5555/oa.{i}"] = f"{server.url}/files/oa{i}.txt"


def providers(server, rate=200.0, **kw):
    oa = harvest.Provider("open_access", harvest.ProviderConfig(f"{server.url}/oa", rate_limit=rate, **kw))
    pub = harvest.Provider("publisher", harvest.ProviderConfig(f"{server.url}/publisher", auth_token="stub-key",
                                                               rate_limit=rate, **kw))
    return oa, pub


FUNNEL_COUNTS = dict(identified=1509, excluded=971, no_doi=25, open_access=72, routed=238, entitled=137)


def funnel_corpus():
    """Records, decisions and a mock transport for a 1509-record retrieval funnel."""
    f = FUNNEL_COUNTS
    recs = []
    for i in range(f["identified"]):
        recs.append(DocumentRecord(id=f"p{i:04d}", title=f"T{i}", abstract="a", year=2015 + i % 9))
    decisions = [corpus.ScreeningDecision(f"p{i:04d}", "exclude", "off_topic") for i in range(f["excluded"])]
    kept = list(range(f["excluded"], f["identified"]))
    oa_docs, pub_docs = set(), {}
    for j, i in enumerate(kept):
        if j < f["no_doi"]:
            continue
        k = j - f["no_doi"]
        if k < f["open_access"]:
            doi = f"10.5555/oa.{i}"
            oa_docs.add(doi)
        elif k < f["open_access"] + f["routed"]:
            doi = f"10.1016/j.pub.{i}"
            pub_docs[doi] = k - f["open_access"] < f["entitled"]
        else:
            doi = f"10.1007/closed.{i}"
        recs[i].doi = doi

    def handler(request: httpx.Request):
        path = request.url.path
        if path.startswith("/oa/"):
            doi = path[len("/oa/"):]
            best = {"url": f"https://files.test/{doi}.txt"} if doi in oa_docs else None
            return httpx.Response(200, json={"doi": doi, "best_oa_location": best})
        if path.startswith("/publisher/"):
            doi = path[len("/publisher/"):]
            if request.headers.get("X-ELS-APIKey") != "k":
                return httpx.Response(401)
            if pub_docs.get(doi):
                return httpx.Response(200, text=xml_article("Body of " + doi), headers={"content-type": "text/xml"})
            return httpx.Response(403, text="<service-error/>")
        if request.url.host == "files.test":
            return httpx.Response(200, text="Plain text of " + path, headers={"content-type": "text/plain"})
        return httpx.Response(404)

    return recs, decisions, httpx.MockTransport(handler)


def funnel_providers(transport):
    client = httpx.Client(transport=transport)
    oa = harvest.Provider("open_access", harvest.ProviderConfig("https://oa.test/oa", rate_limit=1e6), client=client)
    pub = harvest.Provider("publisher", harvest.ProviderConfig("https://pub.test/publisher", auth_token="k",
                                                               rate_limit=1e6), client=client)
    return oa, pub


def run_funnel_fixture():
    recs, decisions, transport = funnel_corpus()
    screened_recs, _, _ = corpus.apply_screening(recs, decisions)
    oa, pub = funnel_providers(transport)
    return harvest.harvest_all(screened_recs, oa, pub, workers=4)


def dump(obj):
    return json.dumps(obj, sort_keys=True)


def gaussian_blobs(n=90, dim=64, sigma=0.05, seed=0):
    """Three isotropic blobs whose centers are pairwise one unit apart."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), n // 3)
    centers = np.eye(dim)[:3] / np.sqrt(2.0)
    return centers[labels] + sigma * rng.standard_normal((len(labels), dim)), labels


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
