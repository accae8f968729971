import pandas as pd
df = pd.read_csv("employees.csv")
leads = df[["nmae", "dept"]]
print(leads)
