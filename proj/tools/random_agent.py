# Reference external agent: uniform choice over the offered actions.
import sys, json, random
random.seed(0)
for line in sys.stdin:
    msg = json.loads(line)
    if "valid_actions" in msg:
        print(json.dumps({"action_index": random.randrange(len(msg["valid_actions"]))}), flush=True)
