// Minimal dialog runtime: value propagation along data-bind-source edges,
// action submission and alert polling. Touches only elements carrying
// data-object-id plus the status and alert regions.
(function () {
  "use strict";

  var TOKEN_KEY = "webdialog.token";

  function token() {
    try {
      return window.localStorage.getItem(TOKEN_KEY);
    } catch (e) {
      return null;
    }
  }

  function request(method, url, body) {
    var headers = { Accept: "application/json" };
    var t = token();
    if (t) headers.Authorization = "Bearer " + t;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    return fetch(url, {
      method: method,
      headers: headers,
      credentials: "same-origin",
      body: body === undefined ? undefined : JSON.stringify(body),
    }).then(function (res) {
      return res.json().then(
        function (json) { return { status: res.status, body: json }; },
        function () { return { status: res.status, body: {} }; }
      );
    });
  }

  function collectWidgets(root) {
    var byId = {};
    var nodes = root.querySelectorAll("[data-object-id]");
    for (var i = 0; i < nodes.length; i++) {
      var id = nodes[i].getAttribute("data-object-id");
      if (byId[id]) {
        console.warn("webdialog: duplicate data-object-id", id);
        continue;
      }
      byId[id] = nodes[i];
    }
    return byId;
  }

  // Edges source -> target; edges on a cycle are dropped.
  function buildGraph(byId) {
    var edges = [];
    Object.keys(byId).forEach(function (target) {
      var source = byId[target].getAttribute("data-bind-source");
      if (source && byId[source]) edges.push([source, target]);
    });
    var out = {};
    edges.forEach(function (e) {
      (out[e[0]] = out[e[0]] || []).push(e[1]);
    });
    function reaches(from, to) {
      var seen = {}, stack = [from];
      while (stack.length) {
        var n = stack.pop();
        if (n === to) return true;
        if (seen[n]) continue;
        seen[n] = true;
        (out[n] || []).forEach(function (m) { stack.push(m); });
      }
      return false;
    }
    var active = edges.filter(function (e) {
      var cyclic = reaches(e[1], e[0]);
      if (cyclic) console.warn("webdialog: bind cycle through", e[0], "->", e[1]);
      return !cyclic;
    });
    var graph = {};
    active.forEach(function (e) {
      (graph[e[0]] = graph[e[0]] || []).push(e[1]);
    });
    return graph;
  }

  // Copies the value down the DAG; every reachable target is updated once,
  // in topological order.
  function propagate(byId, graph, sourceId) {
    var order = [], state = {};
    function visit(n) {
      if (state[n]) return;
      state[n] = 1;
      (graph[n] || []).forEach(visit);
      order.push(n);
    }
    visit(sourceId);
    order.reverse().forEach(function (id) {
      if (id === sourceId) return;
      var from = byId[id].getAttribute("data-bind-source");
      if (byId[from] && "value" in byId[id]) byId[id].value = byId[from].value;
    });
  }

  function statusRegion() {
    return document.querySelector("[data-status-region]");
  }

  function showStatus(text, ok) {
    var region = statusRegion();
    if (!region) return;
    region.textContent = text;
    region.className = "wd-status " + (ok ? "wd-ok" : "wd-failed");
  }

  function submit(dialog, button) {
    if (button.disabled) return;
    var form = button.closest("form");
    var params = {};
    if (form) {
      var fields = form.querySelectorAll("[data-object-id][name]");
      for (var i = 0; i < fields.length; i++) params[fields[i].name] = fields[i].value;
    }
    var url = "/dialogs/" + encodeURIComponent(dialog) + "/actions/" +
      encodeURIComponent(button.getAttribute("data-object-id"));
    request("POST", url, { params: params }).then(
      function (r) {
        var msg = r.body.message || r.body.error || "HTTP " + r.status;
        showStatus(msg, r.status === 200);
      },
      function () { showStatus("request failed", false); }
    );
  }

  function startAlerts(interval) {
    var region = document.querySelector("[data-alert-region]");
    if (!region || !(interval > 0)) return;
    var inFlight = false;
    setInterval(function () {
      if (inFlight) return;
      inFlight = true;
      request("GET", "/alerts").then(
        function (r) {
          inFlight = false;
          (r.body.alerts || []).forEach(function (a) {
            var p = document.createElement("p");
            p.className = "wd-alert";
            p.textContent = a.message;
            region.appendChild(p);
          });
        },
        function () { inFlight = false; }
      );
    }, interval);
  }

  function initLogin(form) {
    form.addEventListener("submit", function (ev) {
      ev.preventDefault();
      var body = { user_id: form.elements.user_id.value, secret: form.elements.secret.value };
      request("POST", "/login", body).then(function (r) {
        if (r.status === 200 && r.body.token) {
          try { window.localStorage.setItem(TOKEN_KEY, r.body.token); } catch (e) {}
          var next = form.elements.next && form.elements.next.value;
          window.location.href = next ? "/dialogs/" + encodeURIComponent(next) : "/";
        } else {
          showStatus(r.body.error || "login failed", false);
        }
      });
    });
  }

  function init() {
    var root = document.documentElement;
    var login = document.querySelector("form[data-login]");
    if (login) initLogin(login);
    var dialog = root.getAttribute("data-dialog");
    if (!dialog) return;
    var byId = collectWidgets(document);
    var graph = buildGraph(byId);
    Object.keys(graph).forEach(function (source) {
      byId[source].addEventListener("input", function () { propagate(byId, graph, source); });
      byId[source].addEventListener("change", function () { propagate(byId, graph, source); });
    });
    Object.keys(byId).forEach(function (id) {
      var el = byId[id];
      if (el.getAttribute("data-object-type") === "button") {
        el.addEventListener("click", function () { submit(dialog, el); });
      }
    });
    startAlerts(parseInt(root.getAttribute("data-alert-interval"), 10));
  }

  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", init);
  } else {
    init();
  }
})();
