"""Exit codes and outputs of the twinctl command line."""

import json
import os
import signal
import socket
import subprocess
import sys
import time

TWINCTL = sys.argv[1]
failures = []


def run(*args, env=None, timeout=60):
    return subprocess.run([TWINCTL, *args], capture_output=True, text=True, timeout=timeout, env=env)


def check(name, cond, detail=""):
    print(("ok   " if cond else "FAIL ") + name + ("" if cond else f": {detail}"))
    if not cond:
        failures.append(name)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


r = run("ik", "solve", "--target", "474,0,630,1,0,0,0", "--seed", "0,0,0,0,0,0")
check("ik solve converges", r.returncode == 0 and "converged" in r.stdout, r.stdout + r.stderr)

r = run("ik", "solve", "--target", "474,0,630,0,0.7071067811865476,0,0.7071067811865476", "--json")
reply = json.loads(r.stdout)
check("ik solve json", r.returncode == 0 and reply["converged"] and r.stdout.startswith('{"solution":['), r.stdout)

r = run("ik", "solve", "--target", "1200,0,300,0,0.7071067811865476,0,0.7071067811865476")
check("unreachable target exits 1", r.returncode == 1, r.stdout)

r = run("ik", "solve", "--target", "474,0,630,2,0,0,0")
check("non-unit quaternion is a usage error", r.returncode == 2, r.stderr)

for argv in (["--bogus"], ["ik", "solve", "--nope"], ["ik", "solve", "--target", "1,2,3"], ["twin", "jog"],
             ["twin", "jog", "--absolute", "0,0,0,0,0,0", "--relative", "1,0,0,0,0,0"]):
    r = run(*argv)
    check("usage error: " + " ".join(argv), r.returncode == 2, f"exit {r.returncode}")

r = run("--help")
check("help exits 0", r.returncode == 0 and "bench" in r.stdout)

port = free_port()
emu = subprocess.Popen([TWINCTL, "emulator", "serve", "--port", str(port)], stdout=subprocess.PIPE, text=True)
try:
    check("emulator announces its url", f":{port}" in emu.stdout.readline())
    env = dict(os.environ, TWIN_CONTROLLER_URL=f"http://127.0.0.1:{port}")

    r = run("twin", "jog", "--relative", "10,0,0,0,0,0", env=env)
    check("jog relative settles", r.returncode == 0 and "done" in r.stdout, r.stdout + r.stderr)

    r = run("twin", "jog", "--absolute", "0,0,90,0,0,0", "--json", env=env)
    check("jog out of limits exits 1 naming joint 3",
          r.returncode == 1 and json.loads(r.stdout).get("joint") == 3, r.stdout)

    r = run("twin", "linear", "--dx", "50", "--json", env=env)
    check("linear move done", r.returncode == 0 and json.loads(r.stdout)["status"] == "done", r.stdout + r.stderr)

    r = run("twin", "do", "DO_1", "1", env=env)
    check("digital output", r.returncode == 0, r.stdout + r.stderr)

    r = run("twin", "metrics", "--duration", "2", "--json", env=env)
    m = json.loads(r.stdout)
    check("metrics json", r.returncode == 0 and set(m["streams"]) == {"joints", "robtarget", "io", "spylog"}, r.stdout)

    r = run("twin", "run", "--duration", "1", "--json", env=env)
    lines = [json.loads(l) for l in r.stdout.splitlines() if l]
    check("run prints state", r.returncode == 0 and lines and lines[0]["connection"] == "up", r.stdout)

    twin = subprocess.Popen([TWINCTL, "twin", "run"], stdout=subprocess.PIPE, text=True, env=env)
    time.sleep(1.0)
    twin.send_signal(signal.SIGINT)
    check("twin run stops cleanly on interrupt", twin.wait(timeout=10) == 0)

    r = run("twin", "run", "--controller-url", f"http://127.0.0.1:{free_port()}", "--connect-timeout", "0.5")
    check("unreachable controller exits 1", r.returncode == 1, r.stderr)
finally:
    emu.send_signal(signal.SIGINT)
    check("emulator stops cleanly on interrupt", emu.wait(timeout=10) == 0)

r = run("bench", "refresh", "--duration", "3")
check("bench refresh prints the thread table", r.returncode == 0 and "1 joints" in r.stdout, r.stdout)

print(f"{len(failures)} failures")
sys.exit(1 if failures else 0)
